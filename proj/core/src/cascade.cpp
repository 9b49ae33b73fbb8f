#include "adlab/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace adlab {

using ordered_json = nlohmann::ordered_json;

const char* augmentation_source_name(AugmentationSource s) {
    switch (s) {
        case AugmentationSource::kFinalStageNonImpression:
            return "final_stage_nonimpression";
        case AugmentationSource::kEarlyStageNonImpressionRescored:
            return "early_stage_nonimpression_rescored";
    }
    return "?";
}

AugmentationSource augmentation_source_from_name(const std::string& name) {
    if (name == "final_stage_nonimpression")
        return AugmentationSource::kFinalStageNonImpression;
    if (name == "early_stage_nonimpression_rescored")
        return AugmentationSource::kEarlyStageNonImpressionRescored;
    throw ConfigError("unknown augmentation_source: " + name);
}

void StageConfig::validate(size_t num_ads) const {
    if (auction_winners < 1) throw ConfigError("stage: auction_winners must be >= 1");
    if (!(auction_winners <= early_pass && early_pass <= retrieval_size))
        throw ConfigError("stage: need K <= M_pass <= N");
    if (retrieval_size > num_ads)
        throw ConfigError("stage: retrieval_size exceeds ad inventory");
    if (augmentation_rate < 0.0 || augmentation_rate > 1.0)
        throw ConfigError("stage: augmentation_rate outside [0,1]");
}

std::string record_to_line(const TrainingRecord& r) {
    ordered_json j;
    j["request_id"] = r.request_id;
    j["user_id"] = r.user_id;
    j["ad_id"] = r.ad_id;
    j["user_features"] = r.user_features;
    j["ad_features"] = r.ad_features;
    j["bid"] = r.bid;
    j["impressed"] = r.impressed;
    if (r.impressed) {
        j["click_label"] = static_cast<int>(r.click_label);
        j["quality_event_labels"] = r.quality_event_labels;
    }
    j["teacher_ectr"] = r.teacher_ectr;
    j["final_cqs"] = r.final_cqs;
    j["ctr_traffic"] = r.ctr_traffic;
    j["augmented"] = r.augmented;
    return j.dump();
}

TrainingRecord record_from_line(const std::string& line) {
    ordered_json j = ordered_json::parse(line);
    TrainingRecord r;
    r.request_id = j.at("request_id").get<int64_t>();
    r.user_id = j.at("user_id").get<int32_t>();
    r.ad_id = j.at("ad_id").get<int32_t>();
    r.user_features = j.at("user_features").get<std::vector<int32_t>>();
    r.ad_features = j.at("ad_features").get<std::vector<int32_t>>();
    r.bid = j.at("bid").get<double>();
    r.impressed = j.at("impressed").get<bool>();
    if (r.impressed) {
        r.click_label = static_cast<int8_t>(j.at("click_label").get<int>());
        r.quality_event_labels =
            j.at("quality_event_labels").get<std::vector<uint8_t>>();
    }
    r.teacher_ectr = j.at("teacher_ectr").get<double>();
    r.final_cqs = j.at("final_cqs").get<double>();
    r.ctr_traffic = j.at("ctr_traffic").get<bool>();
    r.augmented = j.at("augmented").get<bool>();
    return r;
}

StudentEarlyScorer::StudentEarlyScorer(const EarlyTwoTowerModel& primary,
                                       const EarlyTwoTowerModel* cqs_model,
                                       bool constant_quality)
    : primary_(&primary), cqs_model_(cqs_model),
      constant_quality_(constant_quality) {}

void StudentEarlyScorer::score(
    const World& world, const RankRequest& request,
    std::vector<EarlyTwoTowerModel::ServingScores>& out) const {
    const UserProfile& user = world.user(request.user_id);
    EarlyTwoTowerModel::ServeScratch scratch;
    EarlyTwoTowerModel::BatchScratch batch;
    std::vector<double> h_u;
    primary_->user_vector(user.features, h_u, scratch);
    primary_->score_candidates(world, request.candidates, h_u, batch, out);
    if (constant_quality_) {
        for (auto& s : out) s.y_cqs = 0.0;
    } else if (cqs_model_ != nullptr) {
        std::vector<double> h_u2;
        cqs_model_->user_vector(user.features, h_u2, scratch);
        std::vector<EarlyTwoTowerModel::ServingScores> cqs_scores;
        cqs_model_->score_candidates(world, request.candidates, h_u2, batch,
                                     cqs_scores);
        for (size_t i = 0; i < out.size(); ++i) out[i].y_cqs = cqs_scores[i].y_cqs;
    }
}

void OracleEarlyScorer::score(
    const World& world, const RankRequest& request,
    std::vector<EarlyTwoTowerModel::ServingScores>& out) const {
    FinalStageScorers::UserContext ctx;
    finals_->prepare_user(world.user(request.user_id), ctx);
    ScorerScratch scratch;
    std::vector<ScoredAd> scored;
    scored.reserve(request.candidates.size());
    finals_->score_batch(ctx, world, request.candidates, scratch, scored);
    out.resize(scored.size());
    for (size_t i = 0; i < scored.size(); ++i) {
        out[i].y_ctr = scored[i].pctr;
        out[i].y_cqs = scored[i].cqs;
    }
}

std::vector<size_t> top_k_by_value(std::span<const double> values,
                                   std::span<const int32_t> ad_ids, size_t k) {
    std::vector<size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    k = std::min(k, idx.size());
    auto better = [&](size_t a, size_t b) {
        if (values[a] != values[b]) return values[a] > values[b];
        return ad_ids[a] < ad_ids[b];
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(),
                      better);
    idx.resize(k);
    return idx;
}

namespace {

TrainingRecord base_record(const World& world, int64_t request_id,
                           int32_t user_id, const ScoredAd& scored) {
    const AdCandidate& ad = world.ad(scored.ad_id);
    TrainingRecord r;
    r.request_id = request_id;
    r.user_id = user_id;
    r.ad_id = scored.ad_id;
    r.user_features = world.user(user_id).features;
    r.ad_features = ad.features;
    r.bid = ad.bid;
    r.teacher_ectr = scored.pctr;
    r.final_cqs = scored.cqs;
    r.ctr_traffic = !ad.post_impression_optimized;
    return r;
}

}  // namespace

std::vector<TrainingRecord> log_impressions(const World& world,
                                            const AuctionOutcome& outcome) {
    std::vector<TrainingRecord> records;
    records.reserve(outcome.winners.size());
    for (const AuctionWinner& w : outcome.winners) {
        TrainingRecord r =
            base_record(world, outcome.request_id, outcome.user_id, w.scored);
        r.impressed = true;
        r.click_label = w.outcome.click ? 1 : 0;
        r.quality_event_labels = w.outcome.quality_events;
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<TrainingRecord> log_augmented(
    const World& world, int64_t request_id, int32_t user_id,
    std::span<const ScoredAd> final_non_winners, double rate,
    uint64_t augment_salt) {
    std::vector<TrainingRecord> records;
    for (const ScoredAd& scored : final_non_winners) {
        Rng rng(mix_seed(augment_salt, static_cast<uint64_t>(request_id),
                         static_cast<uint64_t>(scored.ad_id)));
        if (!rng.bernoulli(rate)) continue;
        TrainingRecord r = base_record(world, request_id, user_id, scored);
        r.impressed = false;
        r.augmented = true;
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<TrainingRecord> rescore_early_only_candidates(
    const World& world, int64_t request_id, int32_t user_id,
    std::span<const int32_t> rejected_ad_ids, const FinalStageScorers& finals,
    const FinalStageScorers::UserContext& ctx, double rate,
    uint64_t augment_salt) {
    std::vector<TrainingRecord> records;
    ScorerScratch scratch;
    for (int32_t ad_id : rejected_ad_ids) {
        Rng rng(mix_seed(augment_salt, static_cast<uint64_t>(request_id),
                         static_cast<uint64_t>(ad_id)));
        if (!rng.bernoulli(rate)) continue;
        ScoredAd scored = finals.score(ctx, world, ad_id, scratch);
        TrainingRecord r = base_record(world, request_id, user_id, scored);
        r.impressed = false;
        r.augmented = true;
        records.push_back(std::move(r));
    }
    return records;
}

RequestTrace run_request(const World& world, const RankRequest& request,
                         const EarlyScorer& early,
                         const FinalStageScorers& finals,
                         const StageConfig& config, uint64_t outcome_salt,
                         uint64_t augment_salt, CascadeCounters& counters,
                         const std::vector<EarlyTwoTowerModel::ServingScores>*
                             precomputed_early) {
    RequestTrace trace;
    counters.requests += 1;
    if (request.candidates.empty()) {
        trace.skipped = true;
        counters.skipped_empty += 1;
        return trace;
    }

    // early stage: score everything, keep the top M_pass by early total value
    std::vector<EarlyTwoTowerModel::ServingScores> scored_here;
    if (precomputed_early == nullptr) {
        early.score(world, request, scored_here);
        precomputed_early = &scored_here;
    }
    const std::vector<EarlyTwoTowerModel::ServingScores>& early_scores =
        *precomputed_early;
    if (early_scores.size() != request.candidates.size())
        throw UsageError("run_request: early scores do not match candidates");
    const size_t n = request.candidates.size();
    std::vector<double> tv_early(n);
    for (size_t i = 0; i < n; ++i) {
        const AdCandidate& ad = world.ad(request.candidates[i]);
        tv_early[i] = total_value(ad.bid, early_scores[i].y_ctr,
                                  early_scores[i].y_cqs, finals.quality_weight());
    }
    std::vector<size_t> pass =
        top_k_by_value(tv_early, request.candidates, config.early_pass);

    // final stage scores exactly the ads the early stage passed
    FinalStageScorers::UserContext ctx;
    finals.prepare_user(world.user(request.user_id), ctx);
    ScorerScratch scratch;
    std::vector<int32_t> final_ids(pass.size());
    for (size_t i = 0; i < pass.size(); ++i)
        final_ids[i] = request.candidates[pass[i]];
    std::vector<ScoredAd> final_scored;
    final_scored.reserve(pass.size());
    finals.score_batch(ctx, world, final_ids, scratch, final_scored);
    std::vector<double> tv_final(pass.size());
    trace.final_candidates.resize(pass.size());
    for (size_t i = 0; i < pass.size(); ++i) {
        tv_final[i] = final_scored[i].total_value;
        trace.final_candidates[i] = {final_ids[i], tv_early[pass[i]], tv_final[i]};
    }

    // auction: impress the top K by final total value
    std::vector<size_t> win_idx =
        top_k_by_value(tv_final, final_ids, config.auction_winners);
    trace.outcome.request_id = request.request_id;
    trace.outcome.user_id = request.user_id;
    std::vector<bool> is_winner(pass.size(), false);
    for (size_t w : win_idx) {
        is_winner[w] = true;
        AuctionWinner winner;
        winner.scored = final_scored[w];
        const AdCandidate& ad = world.ad(final_ids[w]);
        winner.campaign_id = ad.campaign_id;
        winner.post_impression_optimized = ad.post_impression_optimized;
        Rng rng(mix_seed(outcome_salt, static_cast<uint64_t>(request.request_id),
                         static_cast<uint64_t>(final_ids[w])));
        winner.outcome = world.realize_outcomes(request.user_id, final_ids[w], rng);
        trace.outcome.winners.push_back(std::move(winner));
    }

    trace.records = log_impressions(world, trace.outcome);
    counters.impressions += trace.records.size();

    // augmented records from non-impressed ads, by ad_id for stable output
    std::vector<ScoredAd> non_winners;
    for (size_t i = 0; i < pass.size(); ++i)
        if (!is_winner[i]) non_winners.push_back(final_scored[i]);
    std::sort(non_winners.begin(), non_winners.end(),
              [](const ScoredAd& a, const ScoredAd& b) { return a.ad_id < b.ad_id; });
    std::vector<TrainingRecord> augmented =
        log_augmented(world, request.request_id, request.user_id, non_winners,
                      config.augmentation_rate, augment_salt);
    counters.augmented += augmented.size();
    if (config.augmentation_source ==
        AugmentationSource::kEarlyStageNonImpressionRescored) {
        std::vector<bool> in_funnel(n, false);
        for (size_t p : pass) in_funnel[p] = true;
        std::vector<int32_t> rejected;
        for (size_t i = 0; i < n; ++i)
            if (!in_funnel[i]) rejected.push_back(request.candidates[i]);
        std::vector<TrainingRecord> rescored = rescore_early_only_candidates(
            world, request.request_id, request.user_id, rejected, finals, ctx,
            config.augmentation_rate, augment_salt);
        counters.early_rescored += rescored.size();
        counters.augmented += rescored.size();
        for (auto& r : rescored) augmented.push_back(std::move(r));
        std::sort(augmented.begin(), augmented.end(),
                  [](const TrainingRecord& a, const TrainingRecord& b) {
                      return a.ad_id < b.ad_id;
                  });
    }
    for (auto& r : augmented) trace.records.push_back(std::move(r));
    return trace;
}

}  // namespace adlab
