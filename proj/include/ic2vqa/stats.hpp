#pragma once

#include <span>
#include <vector>

namespace ic2vqa {

// Sample Pearson correlation. Throws ShapeError for mismatched or too-short
// inputs and UndefinedCorrelationError when either input has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

// Pearson correlation of average ranks.
double spearman(std::span<const double> a, std::span<const double> b);

// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// linspace(1, 0, n).
std::vector<double> linearly_decreasing(std::size_t n);

double mean(std::span<const double> values);
double median(std::vector<double> values);

}  // namespace ic2vqa
