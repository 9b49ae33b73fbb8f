#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adlab/rankers.hpp"
#include "adlab/world.hpp"

namespace adlab {

enum class AugmentationSource {
    kFinalStageNonImpression,          // pool: final-stage candidates minus winners
    kEarlyStageNonImpressionRescored,  // pool: all retrieved minus winners, rescored offline
};

const char* augmentation_source_name(AugmentationSource s);
AugmentationSource augmentation_source_from_name(const std::string& name);

struct StageConfig {
    size_t retrieval_size = 200;  // N
    size_t early_pass = 40;       // M_pass
    size_t auction_winners = 5;   // K
    double augmentation_rate = 0.3;
    AugmentationSource augmentation_source =
        AugmentationSource::kFinalStageNonImpression;

    void validate(size_t num_ads) const;
};

// One consolidated-pipeline row. teacher_ectr and final_cqs are logged for
// every record; click/quality labels exist only on impressions, and
// ctr_traffic gates which records may enter CTR-side losses.
struct TrainingRecord {
    int64_t request_id = 0;
    int32_t user_id = 0;
    int32_t ad_id = 0;
    std::vector<int32_t> user_features;  // full slot array
    std::vector<int32_t> ad_features;    // full slot array
    double bid = 0.0;
    bool impressed = false;
    int8_t click_label = 0;                      // valid iff impressed
    std::vector<uint8_t> quality_event_labels;   // valid iff impressed
    double teacher_ectr = 0.0;
    double final_cqs = 0.0;
    bool ctr_traffic = false;
    bool augmented = false;
};

std::string record_to_line(const TrainingRecord& record);
TrainingRecord record_from_line(const std::string& line);

struct AuctionWinner {
    ScoredAd scored;  // final-stage scores
    GroundTruthOutcome outcome;
    int32_t campaign_id = 0;
    bool post_impression_optimized = false;
};

struct AuctionOutcome {
    int64_t request_id = 0;
    int32_t user_id = 0;
    std::vector<AuctionWinner> winners;  // total value desc, ad_id asc
};

// Early top-M_pass candidate with the total values seen by both stages.
struct FinalCandidate {
    int32_t ad_id = 0;
    double tv_early = 0.0;
    double tv_final = 0.0;
};

struct RequestTrace {
    bool skipped = false;
    AuctionOutcome outcome;
    std::vector<TrainingRecord> records;  // winners first, then augmented
    std::vector<FinalCandidate> final_candidates;
};

struct CascadeCounters {
    size_t requests = 0;
    size_t skipped_empty = 0;
    size_t impressions = 0;
    size_t augmented = 0;
    size_t early_rescored = 0;
};

// Early-stage scoring interface used by the funnel.
class EarlyScorer {
public:
    virtual ~EarlyScorer() = default;
    // scores aligned with request.candidates
    virtual void score(const World& world, const RankRequest& request,
                       std::vector<EarlyTwoTowerModel::ServingScores>& out)
        const = 0;
};

// Serves from a live student model: one user-tower pass per request, one
// ad-tower pass per candidate. An optional dedicated CQS model supplies
// y_cqs instead of the primary's head; constant_quality pins y_cqs to 0
// (the pre-CQS production baseline).
class StudentEarlyScorer : public EarlyScorer {
public:
    explicit StudentEarlyScorer(const EarlyTwoTowerModel& primary,
                                const EarlyTwoTowerModel* cqs_model = nullptr,
                                bool constant_quality = false);
    void score(const World& world, const RankRequest& request,
               std::vector<EarlyTwoTowerModel::ServingScores>& out) const override;

private:
    const EarlyTwoTowerModel* primary_;
    const EarlyTwoTowerModel* cqs_model_;
    bool constant_quality_;
};

// Early stage replaced by the exact final-stage scorer (consistency oracle).
class OracleEarlyScorer : public EarlyScorer {
public:
    explicit OracleEarlyScorer(const FinalStageScorers& finals)
        : finals_(&finals) {}
    void score(const World& world, const RankRequest& request,
               std::vector<EarlyTwoTowerModel::ServingScores>& out) const override;

private:
    const FinalStageScorers* finals_;
};

// sort index by (value desc, ad_id asc); returns the top k indices in order
std::vector<size_t> top_k_by_value(std::span<const double> values,
                                   std::span<const int32_t> ad_ids, size_t k);

std::vector<TrainingRecord> log_impressions(const World& world,
                                            const AuctionOutcome& outcome);

// each non-winner included independently with probability `rate`; the
// inclusion draw is keyed by (salt, request, ad) so it does not depend on
// iteration order
std::vector<TrainingRecord> log_augmented(const World& world,
                                          int64_t request_id, int32_t user_id,
                                          std::span<const ScoredAd> final_non_winners,
                                          double rate, uint64_t augment_salt);

// Simulator-only augmentation over candidates the early stage rejected;
// teacher scores are computed offline for the sampled ads.
std::vector<TrainingRecord> rescore_early_only_candidates(
    const World& world, int64_t request_id, int32_t user_id,
    std::span<const int32_t> rejected_ad_ids, const FinalStageScorers& finals,
    const FinalStageScorers::UserContext& ctx, double rate,
    uint64_t augment_salt);

// One request through the full funnel: early top-M_pass -> final scoring ->
// auction top-K -> impression outcomes -> consolidated logging.
// `precomputed_early`, when given, must be the scorer's output for this
// request (callers that already scored the candidates skip the recompute).
RequestTrace run_request(const World& world, const RankRequest& request,
                         const EarlyScorer& early,
                         const FinalStageScorers& finals,
                         const StageConfig& config, uint64_t outcome_salt,
                         uint64_t augment_salt, CascadeCounters& counters,
                         const std::vector<EarlyTwoTowerModel::ServingScores>*
                             precomputed_early = nullptr);

}  // namespace adlab
