#include "sampsd/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sampsd/errors.hpp"

namespace sampsd {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw config_error("train config: learning rate must be > 0");
    if (rho < 0.0) throw config_error("train config: rho must be >= 0");
    if (batch_size < 1) throw config_error("train config: batch size must be >= 1");
}

std::string TrainLog::to_csv() const {
    std::ostringstream out;
    out << "epoch,loss,clean_acc,asr\n";
    for (const auto& e : epochs) {
        out << e.epoch << "," << e.loss << ",";
        if (e.clean_accuracy)
            out << *e.clean_accuracy;
        else
            out << "na";
        out << ",";
        if (e.attack_success_rate)
            out << *e.attack_success_rate;
        else
            out << "na";
        out << "\n";
    }
    return out.str();
}

EvalStats evaluate_model(const MlpModel& model, const EvalContext& ctx) {
    const Dataset& ds = *ctx.eval_set;
    EvalStats stats;
    std::size_t correct = 0;
    std::size_t asr_hits = 0;
    std::size_t asr_total = 0;
    for (const auto& s : ds.samples) {
        const ForwardResult f = forward(model, s.pixels);
        const int pred = static_cast<int>(
            std::max_element(f.logits.begin(), f.logits.end()) - f.logits.begin());
        if (pred == s.label) ++correct;

        if (ctx.rule == TargetRule::fixed && s.label == ctx.target_label) continue;
        const std::vector<double> trig = apply_trigger(s.pixels, ds.shape, ctx.trigger);
        const ForwardResult ft = forward(model, trig);
        const int pred_t = static_cast<int>(
            std::max_element(ft.logits.begin(), ft.logits.end()) - ft.logits.begin());
        const int target = ctx.rule == TargetRule::fixed ? ctx.target_label
                                                         : (s.label + 1) % ds.num_classes;
        if (pred_t == target) ++asr_hits;
        ++asr_total;
    }
    stats.clean_accuracy = ds.size() ? static_cast<double>(correct) / ds.size() : 0.0;
    stats.attack_success_rate =
        asr_total ? static_cast<double>(asr_hits) / asr_total : 0.0;
    return stats;
}

void sgd_step(MlpModel& model, const Gradients& grads, double eta) {
    if (grads.w1.rows != model.w1.rows || grads.w1.cols != model.w1.cols ||
        grads.w2.rows != model.w2.rows || grads.w2.cols != model.w2.cols)
        throw dimension_error("sgd_step: gradient shapes do not match model");
    for (std::size_t i = 0; i < model.w1.data.size(); ++i)
        model.w1.data[i] -= eta * grads.w1.data[i];
    for (std::size_t i = 0; i < model.b1.size(); ++i) model.b1[i] -= eta * grads.b1[i];
    for (std::size_t i = 0; i < model.w2.data.size(); ++i)
        model.w2.data[i] -= eta * grads.w2.data[i];
    for (std::size_t i = 0; i < model.b2.size(); ++i) model.b2[i] -= eta * grads.b2[i];
}

namespace {

double grad_norm(const Gradients& g) {
    double s = 0.0;
    for (double v : g.w1.data) s += v * v;
    for (double v : g.b1) s += v * v;
    for (double v : g.w2.data) s += v * v;
    for (double v : g.b2) s += v * v;
    return std::sqrt(s);
}

}  // namespace

double sam_step(MlpModel& model, const Matrix& inputs, const std::vector<int>& labels, double eta,
                double rho) {
    Gradients g;
    const double loss = batch_gradients(model, inputs, labels, g);

    const double norm = grad_norm(g);
    if (norm < 1e-12) {
        sgd_step(model, g, eta);
        return loss;
    }

    // Ascend to the perturbed point in a copy, so the caller's parameters are
    // untouched until the real step.
    const double scale = rho / norm;
    MlpModel perturbed = model;
    for (std::size_t i = 0; i < perturbed.w1.data.size(); ++i)
        perturbed.w1.data[i] += scale * g.w1.data[i];
    for (std::size_t i = 0; i < perturbed.b1.size(); ++i) perturbed.b1[i] += scale * g.b1[i];
    for (std::size_t i = 0; i < perturbed.w2.data.size(); ++i)
        perturbed.w2.data[i] += scale * g.w2.data[i];
    for (std::size_t i = 0; i < perturbed.b2.size(); ++i) perturbed.b2[i] += scale * g.b2[i];

    Gradients g2;
    batch_gradients(perturbed, inputs, labels, g2);
    sgd_step(model, g2, eta);
    return loss;
}

TrainResult train(const Dataset& train_set, const MlpModel& init, const TrainConfig& cfg,
                  const EvalContext* eval) {
    cfg.validate();
    if (train_set.size() == 0) throw value_error("train: dataset is empty");
    if (!init.shapes_consistent()) throw dimension_error("train: init model shapes inconsistent");

    TrainResult result;
    result.model = init;
    Rng master(cfg.seed);

    const std::size_t n = train_set.size();
    const std::size_t d = init.input_dim;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = master.stream("epoch_shuffle", epoch);
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t bsz = std::min(cfg.batch_size, n - start);
            Matrix inputs(bsz, d);
            std::vector<int> labels(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                const Sample& s = train_set.samples[order[start + i]];
                std::copy(s.pixels.begin(), s.pixels.end(), inputs.row_ptr(i));
                labels[i] = s.label;
            }

            double batch_loss;
            if (cfg.kind == OptimizerKind::sgd) {
                Gradients g;
                batch_loss = batch_gradients(result.model, inputs, labels, g);
                sgd_step(result.model, g, cfg.learning_rate);
            } else {
                batch_loss = sam_step(result.model, inputs, labels, cfg.learning_rate, cfg.rho);
            }

            if (!std::isfinite(batch_loss)) {
                std::ostringstream msg;
                msg << "train: loss diverged at epoch " << epoch;
                throw training_diverged_error(msg.str());
            }
            loss_sum += batch_loss * static_cast<double>(bsz);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = loss_sum / static_cast<double>(n);
        if (eval && eval->eval_set) {
            const EvalStats es = evaluate_model(result.model, *eval);
            stats.clean_accuracy = es.clean_accuracy;
            stats.attack_success_rate = es.attack_success_rate;
        }
        result.log.epochs.push_back(stats);
    }
    return result;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

PropositionReport proposition_check(const std::vector<double>& a, const Matrix& w,
                                    const std::vector<double>& x_tilde, double rho, double eta) {
    const std::size_t m = a.size();
    const std::size_t d = x_tilde.size();
    if (w.rows != m || w.cols != d)
        throw dimension_error("proposition_check: W must be m x d matching a and x");

    // Bias-free binary network with poisoned target label 0:
    //   f = sum_j a_j relu(<w_j, x~>),  loss = log(1 + exp(f)),  dl/df = sigmoid(f).
    std::vector<double> pre(m), act(m);
    std::vector<int> mask(m);
    double f = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double* row = w.row_ptr(j);
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += row[c] * x_tilde[c];
        pre[j] = s;
        mask[j] = s > 0.0 ? 1 : 0;
        act[j] = mask[j] ? s : 0.0;
        f += a[j] * act[j];
    }
    const double lprime = sigmoid(f);
    const double x_sq = dot(x_tilde, x_tilde);

    // ||grad_theta f||^2 over (a, W).
    double gradf_sq = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        gradf_sq += act[j] * act[j];
        if (mask[j]) gradf_sq += a[j] * a[j] * x_sq;
    }

    // Loss gradient: d l / d a_j = l' act_j ; d l / d w_j = l' a_j mask_j x~.
    const double gnorm = lprime * std::sqrt(gradf_sq);

    PropositionReport report;
    report.neurons.resize(m);

    // One SGD step: w_j <- w_j - eta l' a_j mask_j x~.
    // One SAM step: perturb theta by rho g/||g||, re-linearize, step from the
    // original weights. Computed explicitly below, not via the first-order
    // closed form, so the report reflects two actual updates.
    std::vector<double> pre_eps(m);
    std::vector<double> a_eps(m);
    double lprime_eps = lprime;
    const bool applicable = gnorm >= 1e-12;
    if (applicable) {
        const double scale = rho / gnorm;
        double f_eps = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            a_eps[j] = a[j] + scale * lprime * act[j];
            // w_j_eps = w_j + scale l' a_j mask_j x~, so its inner product with
            // x~ shifts by scale l' a_j mask_j ||x~||^2.
            pre_eps[j] = pre[j] + (mask[j] ? scale * lprime * a[j] * x_sq : 0.0);
            f_eps += a_eps[j] * (pre_eps[j] > 0.0 ? pre_eps[j] : 0.0);
        }
        lprime_eps = sigmoid(f_eps);
        for (std::size_t j = 0; j < m; ++j) {
            const int mask_eps = pre_eps[j] > 0.0 ? 1 : 0;
            const double delta_sam = -eta * lprime_eps * a_eps[j] * mask_eps * x_sq;
            const double delta_sgd = -eta * lprime * a[j] * mask[j] * x_sq;
            NeuronReport& nr = report.neurons[j];
            nr.preactivation = pre[j];
            nr.a = a[j];
            nr.active = mask[j] != 0;
            nr.applicable = true;
            nr.delta_sam = delta_sam;
            nr.delta_sgd = delta_sgd;
            nr.sam_greater = delta_sam > delta_sgd;
            nr.condition =
                a[j] * mask[j] < -act[j] / ((1.0 - lprime) * gradf_sq);
        }
    } else {
        for (std::size_t j = 0; j < m; ++j) {
            NeuronReport& nr = report.neurons[j];
            nr.preactivation = pre[j];
            nr.a = a[j];
            nr.active = mask[j] != 0;
            nr.applicable = false;  // zero gradient: condition undefined
        }
    }

    for (const auto& nr : report.neurons) {
        if (nr.applicable && nr.active && nr.condition) {
            ++report.active_condition_true;
            if (nr.sam_greater) ++report.sam_greater_among_true;
            if (nr.a < 0.0) ++report.negative_a_among_true;
        }
    }
    return report;
}

}  // namespace sampsd
