#include "kvqa/vector_math.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "kvqa/errors.hpp"
#include "kvqa/hashing.hpp"

namespace kvqa {

std::string hex64(std::uint64_t value) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << value;
    return out.str();
}

double l2_norm(std::span<const double> v) noexcept {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DomainError("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
    }
    if (a.empty()) throw DomainError("cosine_similarity: empty vectors");
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine_similarity: zero vector");
    const double cos = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(cos, -1.0, 1.0);
}

void normalize_in_place(std::vector<double>& v) {
    const double norm = l2_norm(v);
    if (norm == 0.0 || !std::isfinite(norm)) throw DomainError("normalize: zero or non-finite vector");
    for (double& x : v) x /= norm;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) return out;
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        total += out[i];
    }
    for (double& x : out) x /= total;
    return out;
}

}  // namespace kvqa
