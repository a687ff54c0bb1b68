#pragma once

#include <span>
#include <vector>

namespace kvqa {

using Embedding = std::vector<double>;

// Cosine similarity, clamped to [-1, 1]. Throws DomainError on a dimension
// mismatch, an empty vector or a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

double l2_norm(std::span<const double> v) noexcept;

// Scales v to unit length. Throws DomainError on a zero vector.
void normalize_in_place(std::vector<double>& v);

// Numerically stable softmax (max-shifted). Empty input gives empty output.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace kvqa
