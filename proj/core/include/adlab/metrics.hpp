#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adlab/cascade.hpp"
#include "adlab/rankers.hpp"

namespace adlab {

// Top-K ads by final-stage total value over ALL retrieved candidates
// (replay flow, no funnel truncation).
struct GoldenSet {
    int64_t request_id = 0;
    std::vector<int32_t> ad_ids;        // ordered by (tv desc, ad_id asc)
    std::vector<double> total_values;   // aligned with ad_ids
    double sum_total_value = 0.0;
};

// `final_scored` must cover every retrieved candidate of the request.
GoldenSet build_golden_set(int64_t request_id,
                           std::span<const ScoredAd> final_scored, size_t k);

// |model_topk n golden| / K
double hard_recall(std::span<const int32_t> model_topk, const GoldenSet& golden);

// sum of FINAL-stage total values of the model's picks / golden sum.
// nullopt when the golden sum is not positive.
std::optional<double> soft_recall(std::span<const double> model_pick_final_tvs,
                                  const GoldenSet& golden);

// sum|TV_final - TV_early| / sum|TV_final| over the final-stage candidates
// of one request; nullopt on a zero denominator.
std::optional<double> total_value_divergence(std::span<const FinalCandidate> finals);

// mean log loss / entropy of the empirical positive rate; nullopt unless
// both classes are present
std::optional<double> normalized_entropy(std::span<const double> predictions,
                                         std::span<const uint8_t> labels);

// rank-sum AUC with ties counted 1/2; nullopt unless both classes present
std::optional<double> auc(std::span<const double> predictions,
                          std::span<const uint8_t> labels);

double mean_squared_error(std::span<const double> predictions,
                          std::span<const double> labels);

struct OnlineOutcomeMetrics {
    size_t impressions = 0;
    double ctr = 0.0;
    double cvr_proxy = 0.0;  // clicks weighted by per-campaign propensity
    double xout_rate = 0.0;  // quality event 0
    double impression_total_value = 0.0;  // mean final TV of impressed ads
};

std::optional<OnlineOutcomeMetrics> online_outcome_metrics(
    std::span<const AuctionOutcome> outcomes, const World& world);

struct MetricSummary {
    size_t count = 0;            // requests with a defined value
    size_t undefined_count = 0;  // requests excluded
    double mean = 0.0;
    double sd = 0.0;
    double ci_lo = 0.0;  // bootstrap 95%
    double ci_hi = 0.0;
};

// mean/sd plus a seeded percentile-bootstrap CI (1000 resamples)
MetricSummary aggregate_metric(std::span<const double> values,
                               size_t undefined_count, uint64_t bootstrap_seed,
                               size_t resamples = 1000);

struct MetricsReport {
    // per-request distributions: hard_recall, soft_recall, tvd, ctr,
    // xout_rate, cvr_proxy, impression_total_value
    std::map<std::string, MetricSummary> request_metrics;
    // pooled scalars: ne_ctr, auc_ctr, mse_cqs, tvd_pooled, calibration...
    std::map<std::string, double> pooled_metrics;
    size_t request_count = 0;
};

// Collects per-request metric values, then aggregates with shared bootstrap
// seeding. Undefined per-request values are excluded and counted.
class MetricsAccumulator {
public:
    void add(const std::string& metric, std::optional<double> value);
    void add_defined(const std::string& metric, double value);
    MetricsReport aggregate(uint64_t bootstrap_seed) const;
    const std::vector<double>& values(const std::string& metric) const;

private:
    struct Series {
        std::vector<double> values;
        size_t undefined = 0;
    };
    std::map<std::string, Series> series_;
};

}  // namespace adlab
