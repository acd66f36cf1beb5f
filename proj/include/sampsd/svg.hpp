#pragma once

#include <string>
#include <vector>

namespace sampsd::svg {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;  // (x, y)
    std::string color = "#1f77b4";
    bool dashed = false;
};

// Marker shapes cycle through circle, square, triangle, diamond.
struct ScatterGroup {
    std::string name;
    std::vector<std::pair<double, double>> points;
    std::string color = "#1f77b4";
    std::string shape = "circle";
};

std::string line_plot(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series);

std::string scatter_plot(const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<ScatterGroup>& groups);

}  // namespace sampsd::svg
