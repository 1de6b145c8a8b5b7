#pragma once

// Central finite differences against autograd gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lgvq/autograd.hpp"

namespace lgvq::testing {

struct GradCheckResult {
    double worst_rel = 0.0;
    std::string worst_where;
    int checked = 0;
};

/// Compares d loss / d p for every element of `params` (up to `max_per_param`
/// seeded picks each). An element passes when |a - n| <= rel * max(|a|, |n|)
/// + abs_floor.
inline GradCheckResult grad_check(const std::function<ag::Tensor()>& loss, std::vector<ag::Tensor> params,
                                  double step = 1e-4, int max_per_param = 48, double abs_floor = 1e-8) {
    for (auto& p : params) p.zero_grad();
    loss().backward();
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        const auto g = p.grad();
        analytic.emplace_back(g.begin(), g.end());
        if (analytic.back().empty()) analytic.back().assign(std::size_t(p.numel()), 0.0);
    }
    GradCheckResult res;
    std::mt19937_64 rng(99);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        std::vector<std::int64_t> picks(std::size_t(p.numel()));
        for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = std::int64_t(i);
        if (int(picks.size()) > max_per_param) {
            std::shuffle(picks.begin(), picks.end(), rng);
            picks.resize(std::size_t(max_per_param));
        }
        for (auto i : picks) {
            auto v = p.mutable_data();
            const double orig = v[std::size_t(i)];
            v[std::size_t(i)] = orig + step;
            const double up = loss().item();
            v[std::size_t(i)] = orig - step;
            const double down = loss().item();
            v[std::size_t(i)] = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[pi][std::size_t(i)];
            const double err = std::abs(a - numeric);
            const double scale = std::max(std::abs(a), std::abs(numeric));
            const double rel = err <= abs_floor ? 0.0 : err / std::max(scale, 1e-300);
            if (rel > res.worst_rel) {
                res.worst_rel = rel;
                res.worst_where = "param " + std::to_string(pi) + " elem " + std::to_string(i) + " analytic " +
                                  std::to_string(a) + " numeric " + std::to_string(numeric);
            }
            ++res.checked;
        }
    }
    for (auto& p : params) p.zero_grad();
    return res;
}

/// Exhaustive nearest-neighbour search, first index on ties.
inline std::vector<std::int64_t> brute_force_nearest(const std::vector<double>& rows,
                                                     const std::vector<double>& codebook, int dim) {
    const std::size_t n = rows.size() / std::size_t(dim);
    const std::size_t k = codebook.size() / std::size_t(dim);
    std::vector<std::int64_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> dist(k);
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (int c = 0; c < dim; ++c) {
                const double d = rows[i * std::size_t(dim) + std::size_t(c)] - codebook[j * std::size_t(dim) + std::size_t(c)];
                s += d * d;
            }
            dist[j] = s;
        }
        out[i] = std::int64_t(std::min_element(dist.begin(), dist.end()) - dist.begin());
    }
    return out;
}

}  // namespace lgvq::testing
