#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "adsee/common.hpp"
#include "json.hpp"

namespace adsee {

namespace detail {
inline void check_pair(const std::vector<double>& pred, const std::vector<double>& truth,
                       std::size_t min_len = 1) {
    if (pred.size() != truth.size()) throw user_error("metric: length mismatch");
    if (pred.size() < min_len)
        throw user_error("metric: need at least " + std::to_string(min_len) + " values");
}

/// Average ranks (1-based): tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // mean of ranks i+1..j+1
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
}  // namespace detail

inline double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    detail::check_pair(pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

inline double mse(const std::vector<double>& pred, const std::vector<double>& truth) {
    detail::check_pair(pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

inline double mape(const std::vector<double>& pred, const std::vector<double>& truth) {
    detail::check_pair(pred, truth);
    constexpr double eps = 1e-9;  // zero-click records have true CR 0
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        s += std::abs(pred[i] - truth[i]) / std::max(std::abs(truth[i]), eps);
    return s / static_cast<double>(pred.size());
}

/// NDCG@k with linear gains (relevance = true value) and log2(rank+1)
/// discounts. Prediction ties break by original index. Returns 1 when both
/// the achieved and ideal DCG are zero.
inline double ndcg_at_k(const std::vector<double>& pred, const std::vector<double>& truth,
                        std::size_t k) {
    detail::check_pair(pred, truth);
    if (k == 0) throw user_error("ndcg_at_k: k must be >= 1");
    const std::size_t n = pred.size();
    k = std::min(k, n);

    std::vector<std::size_t> by_pred(n);
    std::iota(by_pred.begin(), by_pred.end(), std::size_t{0});
    std::stable_sort(by_pred.begin(), by_pred.end(),
                     [&](std::size_t a, std::size_t b) { return pred[a] > pred[b]; });

    std::vector<double> ideal = truth;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());

    double dcg = 0.0, idcg = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double discount = 1.0 / std::log2(static_cast<double>(i) + 2.0);
        dcg += truth[by_pred[i]] * discount;
        idcg += ideal[i] * discount;
    }
    if (idcg == 0.0) return dcg == 0.0 ? 1.0 : 0.0;
    return dcg / idcg;
}

inline double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
    detail::check_pair(x, y, 2);
    const double mx = detail::mean(x), my = detail::mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw user_error("pearson_r: correlation undefined for constant input");
    return sxy / std::sqrt(sxx * syy);
}

/// Spearman rho = Pearson correlation of average-tied ranks.
inline double spearman_rho(const std::vector<double>& pred, const std::vector<double>& truth) {
    detail::check_pair(pred, truth, 2);
    return pearson_r(detail::average_ranks(pred), detail::average_ranks(truth));
}

/// Kendall tau-b: concordant minus discordant pairs, tie-corrected.
inline double kendall_tau(const std::vector<double>& pred, const std::vector<double>& truth) {
    detail::check_pair(pred, truth, 2);
    const std::size_t n = pred.size();
    long long concordant = 0, discordant = 0, ties_pred = 0, ties_truth = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dp = pred[i] - pred[j];
            const double dt = truth[i] - truth[j];
            if (dp == 0.0 && dt == 0.0) continue;  // joint ties drop out of tau-b
            if (dp == 0.0) {
                ++ties_pred;
            } else if (dt == 0.0) {
                ++ties_truth;
            } else if ((dp > 0.0) == (dt > 0.0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double n0 = concordant + discordant + ties_pred;
    const double n1 = concordant + discordant + ties_truth;
    if (n0 == 0.0 || n1 == 0.0)
        throw user_error("kendall_tau: correlation undefined for constant input");
    return static_cast<double>(concordant - discordant) / std::sqrt(n0 * n1);
}

struct EvalReport {
    double mae = 0.0;
    double mape = 0.0;
    std::map<std::size_t, double> ndcg_at;  // k -> NDCG@k
    double spearman_rho = 0.0;
    double kendall_tau = 0.0;
    double pearson_r = 0.0;
    std::size_t n = 0;
};

inline EvalReport evaluate_predictions(const std::vector<double>& pred,
                                       const std::vector<double>& truth,
                                       const std::vector<std::size_t>& ndcg_ks = {5, 10, 50}) {
    detail::check_pair(pred, truth, 2);
    EvalReport r;
    r.n = pred.size();
    r.mae = mae(pred, truth);
    r.mape = mape(pred, truth);
    for (std::size_t k : ndcg_ks)
        if (k >= 1 && k <= pred.size()) r.ndcg_at[k] = ndcg_at_k(pred, truth, k);
    r.spearman_rho = spearman_rho(pred, truth);
    r.kendall_tau = kendall_tau(pred, truth);
    r.pearson_r = pearson_r(pred, truth);
    return r;
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
    nlohmann::json ndcg = nlohmann::json::object();
    for (const auto& [k, v] : r.ndcg_at) ndcg[std::to_string(k)] = v;
    j = nlohmann::json{
        {"n", r.n},           {"mae", r.mae},
        {"mape", r.mape},     {"ndcg_at", ndcg},
        {"spearman_rho", r.spearman_rho}, {"kendall_tau", r.kendall_tau},
        {"pearson_r", r.pearson_r},
    };
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
    j.at("n").get_to(r.n);
    j.at("mae").get_to(r.mae);
    j.at("mape").get_to(r.mape);
    j.at("spearman_rho").get_to(r.spearman_rho);
    j.at("kendall_tau").get_to(r.kendall_tau);
    j.at("pearson_r").get_to(r.pearson_r);
    r.ndcg_at.clear();
    for (const auto& [k, v] : j.at("ndcg_at").items())
        r.ndcg_at[static_cast<std::size_t>(std::stoull(k))] = v.get<double>();
}

/// Aligned-column text rendering of an EvalReport.
inline std::string format_report_table(const EvalReport& r) {
    std::ostringstream os;
    const auto row = [&os](const std::string& name, double value) {
        os << name;
        for (std::size_t i = name.size(); i < 14; ++i) os << ' ';
        char buf[48];
        std::snprintf(buf, sizeof buf, "%12.6f", value);
        os << buf << '\n';
    };
    os << "metric                  value\n";
    os << "-----------------------------\n";
    row("mae", r.mae);
    row("mape", r.mape);
    for (const auto& [k, v] : r.ndcg_at) row("ndcg@" + std::to_string(k), v);
    row("spearman_rho", r.spearman_rho);
    row("kendall_tau", r.kendall_tau);
    row("pearson_r", r.pearson_r);
    os << "n = " << r.n << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Delta distribution summaries (for predicted-CR improvements).
// ---------------------------------------------------------------------------

struct DeltaSummary {
    std::size_t n = 0;
    double mean = 0.0;
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
    double skewness = 0.0;           // Fisher moment coefficient; 0 for constant data
    double fraction_positive = 0.0;  // deltas > 0
    double fraction_negative = 0.0;  // deltas < 0
    std::vector<std::size_t> histogram;  // fixed-width bins over [min, max]
    double bin_width = 0.0;
};

inline DeltaSummary delta_summary(const std::vector<double>& deltas, std::size_t bins = 10) {
    if (deltas.empty()) throw user_error("delta_summary: empty input");
    if (bins == 0) throw user_error("delta_summary: bins must be >= 1");
    DeltaSummary s;
    s.n = deltas.size();
    s.min = *std::min_element(deltas.begin(), deltas.end());
    s.max = *std::max_element(deltas.begin(), deltas.end());
    s.mean = detail::mean(deltas);

    std::vector<double> sorted = deltas;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    s.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);

    double m2 = 0.0, m3 = 0.0;
    for (double d : deltas) {
        const double c = d - s.mean;
        m2 += c * c;
        m3 += c * c * c;
    }
    m2 /= static_cast<double>(s.n);
    m3 /= static_cast<double>(s.n);
    s.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;

    for (double d : deltas) {
        if (d > 0.0) s.fraction_positive += 1.0;
        if (d < 0.0) s.fraction_negative += 1.0;
    }
    s.fraction_positive /= static_cast<double>(s.n);
    s.fraction_negative /= static_cast<double>(s.n);

    s.histogram.assign(bins, 0);
    const double span = s.max - s.min;
    s.bin_width = span > 0.0 ? span / static_cast<double>(bins) : 0.0;
    for (double d : deltas) {
        std::size_t b = 0;
        if (span > 0.0) {
            b = static_cast<std::size_t>((d - s.min) / span * static_cast<double>(bins));
            if (b >= bins) b = bins - 1;  // max lands in the last bin
        }
        ++s.histogram[b];
    }
    return s;
}

inline void to_json(nlohmann::json& j, const DeltaSummary& s) {
    j = nlohmann::json{
        {"n", s.n},
        {"mean", s.mean},
        {"median", s.median},
        {"min", s.min},
        {"max", s.max},
        {"skewness", s.skewness},
        {"fraction_positive", s.fraction_positive},
        {"fraction_negative", s.fraction_negative},
        {"histogram", s.histogram},
        {"bin_width", s.bin_width},
    };
}

/// Paired t statistic and two-sided normal-approximation p-value for the
/// hypothesis mean(a - b) = 0. Report plumbing, not a full test framework.
struct PairedTTest {
    double t = 0.0;
    double p = 1.0;
    std::size_t n = 0;
};

inline PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    detail::check_pair(a, b, 2);
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double md = detail::mean(d);
    double var = 0.0;
    for (double x : d) var += (x - md) * (x - md);
    var /= static_cast<double>(n - 1);
    PairedTTest out;
    out.n = n;
    if (var == 0.0) {
        out.t = md == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        out.p = md == 0.0 ? 1.0 : 0.0;
        return out;
    }
    out.t = md / std::sqrt(var / static_cast<double>(n));
    out.p = std::erfc(std::abs(out.t) / std::sqrt(2.0));  // two-sided, normal approx
    return out;
}

}  // namespace adsee
