#include "adlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "adlab/losses.hpp"

namespace adlab {

GoldenSet build_golden_set(int64_t request_id,
                           std::span<const ScoredAd> final_scored, size_t k) {
    std::vector<double> tvs(final_scored.size());
    std::vector<int32_t> ids(final_scored.size());
    for (size_t i = 0; i < final_scored.size(); ++i) {
        tvs[i] = final_scored[i].total_value;
        ids[i] = final_scored[i].ad_id;
    }
    std::vector<size_t> top = top_k_by_value(tvs, ids, k);
    GoldenSet golden;
    golden.request_id = request_id;
    for (size_t i : top) {
        golden.ad_ids.push_back(ids[i]);
        golden.total_values.push_back(tvs[i]);
        golden.sum_total_value += tvs[i];
    }
    return golden;
}

double hard_recall(std::span<const int32_t> model_topk, const GoldenSet& golden) {
    if (golden.ad_ids.empty()) throw ConfigError("hard_recall: K must be >= 1");
    size_t hits = 0;
    for (int32_t id : model_topk)
        if (std::find(golden.ad_ids.begin(), golden.ad_ids.end(), id) !=
            golden.ad_ids.end())
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(golden.ad_ids.size());
}

std::optional<double> soft_recall(std::span<const double> model_pick_final_tvs,
                                  const GoldenSet& golden) {
    if (!(golden.sum_total_value > 0.0)) return std::nullopt;
    double model_sum = std::accumulate(model_pick_final_tvs.begin(),
                                       model_pick_final_tvs.end(), 0.0);
    return model_sum / golden.sum_total_value;
}

std::optional<double> total_value_divergence(
    std::span<const FinalCandidate> finals) {
    double num = 0.0, den = 0.0;
    for (const FinalCandidate& f : finals) {
        num += std::abs(f.tv_final - f.tv_early);
        den += std::abs(f.tv_final);
    }
    if (den == 0.0) return std::nullopt;
    return num / den;
}

std::optional<double> normalized_entropy(std::span<const double> predictions,
                                         std::span<const uint8_t> labels) {
    if (predictions.size() != labels.size() || labels.empty())
        throw ConfigError("normalized_entropy: bad input sizes");
    size_t positives = 0;
    double sum_loss = 0.0;
    for (size_t i = 0; i < labels.size(); ++i) {
        positives += labels[i] ? 1 : 0;
        sum_loss += binary_ce_loss(predictions[i], labels[i] ? 1.0 : 0.0).loss;
    }
    if (positives == 0 || positives == labels.size()) return std::nullopt;
    double p = static_cast<double>(positives) / static_cast<double>(labels.size());
    double entropy = -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
    return (sum_loss / static_cast<double>(labels.size())) / entropy;
}

std::optional<double> auc(std::span<const double> predictions,
                          std::span<const uint8_t> labels) {
    if (predictions.size() != labels.size() || labels.empty())
        throw ConfigError("auc: bad input sizes");
    const size_t n = labels.size();
    size_t n_pos = 0;
    for (uint8_t l : labels) n_pos += l ? 1 : 0;
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return predictions[a] < predictions[b];
    });
    // average ranks over tie groups
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n &&
               predictions[order[j + 1]] == predictions[order[i]])
            ++j;
        double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t t = i; t <= j; ++t)
            if (labels[order[t]]) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double mean_squared_error(std::span<const double> predictions,
                          std::span<const double> labels) {
    if (predictions.size() != labels.size() || predictions.empty())
        throw ConfigError("mean_squared_error: bad input sizes");
    double sum = 0.0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        double d = labels[i] - predictions[i];
        sum += d * d;
    }
    return sum / static_cast<double>(predictions.size());
}

std::optional<OnlineOutcomeMetrics> online_outcome_metrics(
    std::span<const AuctionOutcome> outcomes, const World& world) {
    OnlineOutcomeMetrics m;
    double clicks = 0.0, conversions = 0.0, xouts = 0.0, tv_sum = 0.0;
    for (const AuctionOutcome& o : outcomes) {
        for (const AuctionWinner& w : o.winners) {
            m.impressions += 1;
            clicks += w.outcome.click ? 1.0 : 0.0;
            if (w.outcome.click)
                conversions +=
                    world.campaign(w.campaign_id).conversion_propensity;
            if (!w.outcome.quality_events.empty() && w.outcome.quality_events[0])
                xouts += 1.0;
            tv_sum += w.scored.total_value;
        }
    }
    if (m.impressions == 0) return std::nullopt;
    double n = static_cast<double>(m.impressions);
    m.ctr = clicks / n;
    m.cvr_proxy = conversions / n;
    m.xout_rate = xouts / n;
    m.impression_total_value = tv_sum / n;
    return m;
}

MetricSummary aggregate_metric(std::span<const double> values,
                               size_t undefined_count, uint64_t bootstrap_seed,
                               size_t resamples) {
    MetricSummary s;
    s.count = values.size();
    s.undefined_count = undefined_count;
    if (values.empty()) {
        s.mean = s.sd = s.ci_lo = s.ci_hi =
            std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;

    if (values.size() == 1) {
        s.ci_lo = s.ci_hi = values[0];
        return s;
    }
    Rng rng(bootstrap_seed);
    std::vector<double> means(resamples);
    for (size_t r = 0; r < resamples; ++r) {
        double sum = 0.0;
        for (size_t i = 0; i < values.size(); ++i)
            sum += values[rng.uniform_index(values.size())];
        means[r] = sum / n;
    }
    std::sort(means.begin(), means.end());
    auto pick = [&](double q) {
        double pos = q * static_cast<double>(resamples - 1);
        size_t lo = static_cast<size_t>(pos);
        size_t hi = std::min(lo + 1, resamples - 1);
        double frac = pos - static_cast<double>(lo);
        return means[lo] * (1.0 - frac) + means[hi] * frac;
    };
    s.ci_lo = pick(0.025);
    s.ci_hi = pick(0.975);
    return s;
}

void MetricsAccumulator::add(const std::string& metric,
                             std::optional<double> value) {
    Series& s = series_[metric];
    if (value.has_value())
        s.values.push_back(*value);
    else
        s.undefined += 1;
}

void MetricsAccumulator::add_defined(const std::string& metric, double value) {
    series_[metric].values.push_back(value);
}

const std::vector<double>& MetricsAccumulator::values(
    const std::string& metric) const {
    static const std::vector<double> empty;
    auto it = series_.find(metric);
    return it == series_.end() ? empty : it->second.values;
}

MetricsReport MetricsAccumulator::aggregate(uint64_t bootstrap_seed) const {
    MetricsReport report;
    size_t metric_index = 0;
    for (const auto& [name, series] : series_) {
        report.request_metrics[name] =
            aggregate_metric(series.values, series.undefined,
                             mix_seed(bootstrap_seed, metric_index));
        report.request_count =
            std::max(report.request_count, series.values.size() + series.undefined);
        ++metric_index;
    }
    return report;
}

}  // namespace adlab
