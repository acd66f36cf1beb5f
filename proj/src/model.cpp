#include "sampsd/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sampsd/errors.hpp"

namespace sampsd {

bool MlpModel::shapes_consistent() const {
    return w1.rows == hidden_dim && w1.cols == input_dim && b1.size() == hidden_dim &&
           w2.rows == num_classes && w2.cols == hidden_dim && b2.size() == num_classes;
}

Gradients Gradients::zeros_like(const MlpModel& m) {
    Gradients g;
    g.w1 = Matrix(m.hidden_dim, m.input_dim);
    g.b1.assign(m.hidden_dim, 0.0);
    g.w2 = Matrix(m.num_classes, m.hidden_dim);
    g.b2.assign(m.num_classes, 0.0);
    return g;
}

void Gradients::scale(double factor) {
    for (double& v : w1.data) v *= factor;
    for (double& v : b1) v *= factor;
    for (double& v : w2.data) v *= factor;
    for (double& v : b2) v *= factor;
}

MlpModel init_mlp(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes,
                  Rng rng) {
    MlpModel m;
    m.input_dim = input_dim;
    m.hidden_dim = hidden_dim;
    m.num_classes = num_classes;
    m.w1 = Matrix(hidden_dim, input_dim);
    m.b1.assign(hidden_dim, 0.0);
    m.w2 = Matrix(num_classes, hidden_dim);
    m.b2.assign(num_classes, 0.0);

    const double bound1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    for (double& v : m.w1.data) v = rng.uniform(-bound1, bound1);
    for (double& v : m.b1) v = rng.uniform(-bound1, bound1);
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    for (double& v : m.w2.data) v = rng.uniform(-bound2, bound2);
    for (double& v : m.b2) v = rng.uniform(-bound2, bound2);
    return m;
}

ForwardResult forward(const MlpModel& model, const std::vector<double>& x) {
    if (x.size() != model.input_dim) throw dimension_error("forward: input length mismatch");
    ForwardResult r;
    r.hidden.resize(model.hidden_dim);
    for (std::size_t j = 0; j < model.hidden_dim; ++j) {
        const double* row = model.w1.row_ptr(j);
        double s = model.b1[j];
        for (std::size_t k = 0; k < model.input_dim; ++k) s += row[k] * x[k];
        r.hidden[j] = s > 0.0 ? s : 0.0;
    }
    r.logits.resize(model.num_classes);
    for (std::size_t c = 0; c < model.num_classes; ++c) {
        const double* row = model.w2.row_ptr(c);
        double s = model.b2[c];
        for (std::size_t j = 0; j < model.hidden_dim; ++j) s += row[j] * r.hidden[j];
        r.logits[c] = s;
    }
    return r;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    std::vector<double> p(logits.size());
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        p[c] = std::exp(logits[c] - mx);
        sum += p[c];
    }
    for (double& v : p) v /= sum;
    return p;
}

double loss_ce(const std::vector<double>& logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
        throw dimension_error("loss_ce: label out of range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    return -(logits[static_cast<std::size_t>(label)] - mx) + std::log(sum);
}

Gradients backward(const MlpModel& model, const std::vector<double>& x, int label) {
    const ForwardResult f = forward(model, x);
    Gradients g = Gradients::zeros_like(model);

    std::vector<double> dz = softmax(f.logits);
    dz[static_cast<std::size_t>(label)] -= 1.0;

    for (std::size_t c = 0; c < model.num_classes; ++c) {
        g.b2[c] = dz[c];
        double* row = g.w2.row_ptr(c);
        for (std::size_t j = 0; j < model.hidden_dim; ++j) row[j] = dz[c] * f.hidden[j];
    }
    for (std::size_t j = 0; j < model.hidden_dim; ++j) {
        if (f.hidden[j] <= 0.0) continue;  // ReLU mask; subgradient at 0 is 0
        double dh = 0.0;
        for (std::size_t c = 0; c < model.num_classes; ++c) dh += dz[c] * model.w2(c, j);
        g.b1[j] = dh;
        double* row = g.w1.row_ptr(j);
        for (std::size_t k = 0; k < model.input_dim; ++k) row[k] = dh * x[k];
    }
    return g;
}

double batch_gradients(const MlpModel& model, const Matrix& inputs,
                       const std::vector<int>& labels, Gradients& out) {
    const std::size_t batch = inputs.rows;
    if (batch == 0) throw value_error("batch_gradients: empty batch");
    if (inputs.cols != model.input_dim || labels.size() != batch)
        throw dimension_error("batch_gradients: shape mismatch");

    const std::size_t d = model.input_dim;
    const std::size_t m = model.hidden_dim;
    const std::size_t k = model.num_classes;

    // hidden = relu(X W1^T + b1), as an axpy-ordered product over W1^T.
    Matrix w1t = transpose(model.w1);
    Matrix hidden(batch, m);
    for (std::size_t i = 0; i < batch; ++i) {
        double* hrow = hidden.row_ptr(i);
        for (std::size_t j = 0; j < m; ++j) hrow[j] = model.b1[j];
        const double* xrow = inputs.row_ptr(i);
        for (std::size_t c = 0; c < d; ++c) {
            const double xv = xrow[c];
            const double* wrow = w1t.row_ptr(c);
            for (std::size_t j = 0; j < m; ++j) hrow[j] += xv * wrow[j];
        }
        for (std::size_t j = 0; j < m; ++j)
            if (hrow[j] < 0.0) hrow[j] = 0.0;
    }

    double loss_sum = 0.0;
    Matrix dz(batch, k);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* hrow = hidden.row_ptr(i);
        double* zrow = dz.row_ptr(i);
        for (std::size_t c = 0; c < k; ++c) {
            const double* wrow = model.w2.row_ptr(c);
            double s = model.b2[c];
            for (std::size_t j = 0; j < m; ++j) s += wrow[j] * hrow[j];
            zrow[c] = s;
        }
        const double mx = *std::max_element(zrow, zrow + k);
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            zrow[c] = std::exp(zrow[c] - mx);
            sum += zrow[c];
        }
        const std::size_t y = static_cast<std::size_t>(labels[i]);
        loss_sum += -std::log(zrow[y] / sum);
        for (std::size_t c = 0; c < k; ++c) zrow[c] /= sum;
        zrow[y] -= 1.0;
    }

    out = Gradients::zeros_like(model);
    Matrix dhidden(batch, m);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* zrow = dz.row_ptr(i);
        const double* hrow = hidden.row_ptr(i);
        double* dhrow = dhidden.row_ptr(i);
        for (std::size_t c = 0; c < k; ++c) {
            const double zv = zrow[c];
            out.b2[c] += zv;
            double* gw2 = out.w2.row_ptr(c);
            const double* w2row = model.w2.row_ptr(c);
            for (std::size_t j = 0; j < m; ++j) {
                gw2[j] += zv * hrow[j];
                dhrow[j] += zv * w2row[j];
            }
        }
        for (std::size_t j = 0; j < m; ++j)
            if (hrow[j] <= 0.0) dhrow[j] = 0.0;
        for (std::size_t j = 0; j < m; ++j) out.b1[j] += dhrow[j];
        const double* xrow = inputs.row_ptr(i);
        for (std::size_t j = 0; j < m; ++j) {
            const double gv = dhrow[j];
            if (gv == 0.0) continue;
            double* gw1 = out.w1.row_ptr(j);
            for (std::size_t c = 0; c < d; ++c) gw1[c] += gv * xrow[c];
        }
    }
    out.scale(1.0 / static_cast<double>(batch));
    return loss_sum / static_cast<double>(batch);
}

Matrix extract_features(const MlpModel& model, const Dataset& ds) {
    Matrix feats(ds.size(), model.hidden_dim);
    Matrix w1t = transpose(model.w1);
    const std::size_t d = model.input_dim;
    const std::size_t m = model.hidden_dim;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::vector<double>& x = ds.samples[i].pixels;
        if (x.size() != d) throw dimension_error("extract_features: sample size mismatch");
        double* hrow = feats.row_ptr(i);
        for (std::size_t j = 0; j < m; ++j) hrow[j] = model.b1[j];
        for (std::size_t c = 0; c < d; ++c) {
            const double xv = x[c];
            const double* wrow = w1t.row_ptr(c);
            for (std::size_t j = 0; j < m; ++j) hrow[j] += xv * wrow[j];
        }
        for (std::size_t j = 0; j < m; ++j)
            if (hrow[j] < 0.0) hrow[j] = 0.0;
    }
    return feats;
}

std::vector<Prediction> predict(const MlpModel& model, const Dataset& ds) {
    std::vector<Prediction> out;
    out.reserve(ds.size());
    for (const auto& s : ds.samples) {
        const ForwardResult f = forward(model, s.pixels);
        const std::vector<double> p = softmax(f.logits);
        const std::size_t arg =
            static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        out.push_back({static_cast<int>(arg), p[arg]});
    }
    return out;
}

namespace {

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw format_error("checkpoint: truncated header in " + path);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

void write_f64_le(std::ostream& out, const double* p, std::size_t n) {
    static_assert(sizeof(double) == 8);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &p[i], 8);
        unsigned char b[8];
        for (int s = 0; s < 8; ++s) b[s] = static_cast<unsigned char>(bits >> (8 * s));
        out.write(reinterpret_cast<char*>(b), 8);
    }
}

void read_f64_le(std::istream& in, double* p, std::size_t n, const std::string& path) {
    for (std::size_t i = 0; i < n; ++i) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        if (!in) throw format_error("checkpoint: truncated payload in " + path);
        std::uint64_t bits = 0;
        for (int s = 0; s < 8; ++s) bits |= std::uint64_t(b[s]) << (8 * s);
        std::memcpy(&p[i], &bits, 8);
    }
}

}  // namespace

void save_checkpoint(const MlpModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("checkpoint: cannot write " + path);
    out.write("MODL", 4);
    write_u32_le(out, 1);
    write_u32_le(out, static_cast<std::uint32_t>(model.input_dim));
    write_u32_le(out, static_cast<std::uint32_t>(model.hidden_dim));
    write_u32_le(out, static_cast<std::uint32_t>(model.num_classes));
    write_f64_le(out, model.w1.data.data(), model.w1.data.size());
    write_f64_le(out, model.b1.data(), model.b1.size());
    write_f64_le(out, model.w2.data.data(), model.w2.data.size());
    write_f64_le(out, model.b2.data(), model.b2.size());
}

MlpModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MODL", 4) != 0)
        throw format_error("checkpoint: bad magic in " + path);
    const std::uint32_t version = read_u32_le(in, path);
    if (version != 1) throw format_error("checkpoint: unsupported version in " + path);

    MlpModel m;
    m.input_dim = read_u32_le(in, path);
    m.hidden_dim = read_u32_le(in, path);
    m.num_classes = read_u32_le(in, path);
    m.w1 = Matrix(m.hidden_dim, m.input_dim);
    m.b1.resize(m.hidden_dim);
    m.w2 = Matrix(m.num_classes, m.hidden_dim);
    m.b2.resize(m.num_classes);
    read_f64_le(in, m.w1.data.data(), m.w1.data.size(), path);
    read_f64_le(in, m.b1.data(), m.b1.size(), path);
    read_f64_le(in, m.w2.data.data(), m.w2.data.size(), path);
    read_f64_le(in, m.b2.data(), m.b2.size(), path);
    return m;
}

}  // namespace sampsd
