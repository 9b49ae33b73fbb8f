#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "adlab/nn.hpp"
#include "adlab/world.hpp"

namespace adlab {

// Per-event multipliers entering the consolidated quality score.
struct QualityScalars {
    std::vector<double> values = {1.0, 2.0, 1.0};

    double total() const;
    void validate(size_t num_events) const;
};

// CQS = sum_i scalar_i * pQualityEvent_i
double compute_cqs(std::span<const double> quality_preds,
                   const QualityScalars& scalars);

// AdQuality = f(CQS); f(x) = -x, strictly decreasing (all quality events are
// negative-experience events, so a higher CQS must penalize total value).
double ad_quality(double cqs);

// TotalValue = bid * pctr + quality_weight * AdQuality(cqs). Used identically
// for early-stage (y_ctr, y_cqs) and final-stage (eCTR, consolidated CQS).
double total_value(double bid, double pctr, double cqs, double quality_weight);

enum class Stage { kEarly, kFinal };

struct ScoredAd {
    int32_t ad_id = 0;
    Stage stage = Stage::kEarly;
    double bid = 0.0;
    double pctr = 0.0;  // y_ctr (early) or eCTR (final)
    double cqs = 0.0;   // y_cqs (early) or scalar-weighted event sum (final)
    double total_value = 0.0;
    std::vector<double> quality_event_preds;  // final stage only
};

struct FinalModelConfig {
    size_t embedding_dim = 8;
    std::vector<size_t> hidden = {256, 128, 64};  // + sigmoid output layer
};

struct QualityModelConfig {
    size_t embedding_dim = 8;
    std::vector<size_t> hidden = {64, 32};
};

// Single-tower model over the full (user + ad) feature set with a sigmoid
// output head. Used for the final-stage CTR teacher and, with a smaller
// spec, the per-event quality models.
class WideProbModel {
public:
    WideProbModel(std::string prefix, const FeatureSchema& schema,
                  size_t embedding_dim, const std::vector<size_t>& hidden,
                  uint64_t init_seed);

    // Forward + backward with a hard or soft label in [0,1]; accumulates
    // gradients, returns the loss.
    double train_example(std::span<const int32_t> user_features,
                         std::span<const int32_t> ad_features, double label);

    // Tape-free forward. Reference path for tests; production scoring goes
    // through FrozenWideScorer.
    double predict(std::span<const int32_t> user_features,
                   std::span<const int32_t> ad_features) const;

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    const Mlp& mlp() const { return mlp_; }
    const EmbeddingSet& user_emb() const { return user_emb_; }
    const EmbeddingSet& ad_emb() const { return ad_emb_; }
    size_t user_dim() const { return user_emb_.concat_dim(); }

    void bind();  // rebind internals after params() was loaded from disk

private:
    ParamSet params_;
    EmbeddingSet user_emb_;
    EmbeddingSet ad_emb_;
    Mlp mlp_;
    // training scratch (single training thread per model)
    mutable std::vector<double> input_;
    mutable MlpTape tape_;
    mutable std::vector<double> dinput_;
    mutable std::vector<double> infer_scratch_;
};

class FinalCtrModel : public WideProbModel {
public:
    FinalCtrModel(const FeatureSchema& schema, const FinalModelConfig& config,
                  uint64_t init_seed)
        : WideProbModel("final_ctr", schema, config.embedding_dim, config.hidden,
                        init_seed) {}
};

class QualityEventModel : public WideProbModel {
public:
    QualityEventModel(size_t event_index, const FeatureSchema& schema,
                      const QualityModelConfig& config, uint64_t init_seed)
        : WideProbModel("quality_" + std::to_string(event_index), schema,
                        config.embedding_dim, config.hidden, init_seed),
          event_index_(event_index) {}

    size_t event_index() const { return event_index_; }

private:
    size_t event_index_ = 0;
};

struct ScorerScratch {
    Matrix layer0;
    Matrix ping;
    Matrix pong;
};

// Inference view of a frozen WideProbModel over a fixed ad inventory.
// Layer 0 is split into user and ad column blocks; the ad block (and the ad
// embedding concat behind it) is precomputed per ad, so scoring a request's
// candidates costs one user partial plus the layers above, batched so the
// weights stream once per request. A batch of one is bit-identical to any
// larger batch.
class FrozenWideScorer {
public:
    FrozenWideScorer(const WideProbModel& model, const World& world);

    // user partial of layer 0 (bias included)
    void prepare_user(std::span<const int32_t> user_features,
                      std::vector<double>& user_part) const;

    void score_batch(std::span<const double> user_part,
                     std::span<const int32_t> ad_ids, ScorerScratch& scratch,
                     std::span<double> out) const;

    double score(std::span<const double> user_part, int32_t ad_id,
                 ScorerScratch& scratch) const;

private:
    const WideProbModel* model_;
    Matrix ad_parts_;  // num_ads x layer0_width
};

// The frozen final stage: CTR teacher + M quality models + consolidation.
class FinalStageScorers {
public:
    FinalStageScorers(const FinalCtrModel& ctr,
                      const std::vector<std::unique_ptr<QualityEventModel>>& quality,
                      const World& world, QualityScalars scalars,
                      double quality_weight);

    struct UserContext {
        std::vector<double> ctr_part;
        std::vector<std::vector<double>> quality_parts;
    };

    void prepare_user(const UserProfile& user, UserContext& ctx) const;

    double ectr(const UserContext& ctx, int32_t ad_id, ScorerScratch& s) const;
    void quality_preds(const UserContext& ctx, int32_t ad_id, ScorerScratch& s,
                       std::span<double> out) const;

    // Full final-stage ScoredAd for one candidate.
    ScoredAd score(const UserContext& ctx, const World& world, int32_t ad_id,
                   ScorerScratch& s) const;

    // Final-stage scores for a whole candidate list, one weight pass per
    // model. Appends to `out`.
    void score_batch(const UserContext& ctx, const World& world,
                     std::span<const int32_t> ad_ids, ScorerScratch& s,
                     std::vector<ScoredAd>& out) const;

    size_t num_events() const { return quality_.size(); }
    const QualityScalars& scalars() const { return scalars_; }
    double quality_weight() const { return quality_weight_; }

private:
    FrozenWideScorer ctr_;
    std::vector<FrozenWideScorer> quality_;
    QualityScalars scalars_;
    double quality_weight_;
};

struct StudentConfig {
    size_t embedding_dim = 8;
    std::vector<size_t> tower_hidden = {64, 32};
    size_t tower_dim = 16;  // shared representation width d
    std::vector<size_t> head_hidden = {16};
};

// Early-stage two-tower multi-task model. Towers consume only the
// early-visible feature slots; the three heads share one tower pass over
// the interaction vector [h_u, h_a, h_u * h_a]. The teacher head exists for
// training only and has no serving path.
class EarlyTwoTowerModel {
public:
    EarlyTwoTowerModel(const FeatureSchema& schema, const StudentConfig& config,
                       uint64_t init_seed);

    struct Outputs {
        double y_ctr = 0.0;
        double y_cqs = 0.0;
        double y_teacher = 0.0;
    };

    // serving scores; deliberately has no teacher-head field
    struct ServingScores {
        double y_ctr = 0.0;
        double y_cqs = 0.0;
    };

    // Training path: forward retains tapes, backward consumes them.
    Outputs forward_train(std::span<const int32_t> user_features,
                          std::span<const int32_t> ad_features);
    void backward_train(double d_yctr, double d_ycqs, double d_yteacher);

    // Tape-free full forward (all heads), for evaluation and tests.
    Outputs predict(std::span<const int32_t> user_features,
                    std::span<const int32_t> ad_features) const;

    // Reusable buffers for the serving path; callers that score many
    // candidates per request pass one of these to avoid reallocation.
    struct ServeScratch {
        std::vector<int32_t> ids;
        std::vector<double> x;
        std::vector<double> mlp;
        std::vector<double> inter;
    };

    // Two-tower serving path: tower vectors are computed independently and
    // combined per candidate; the user vector is reused across a request.
    void user_vector(std::span<const int32_t> user_features,
                     std::vector<double>& h_u) const;
    void ad_vector(std::span<const int32_t> ad_features,
                   std::vector<double>& h_a) const;
    ServingScores serve(std::span<const double> h_u,
                        std::span<const double> h_a) const;
    void user_vector(std::span<const int32_t> user_features,
                     std::vector<double>& h_u, ServeScratch& s) const;
    void ad_vector(std::span<const int32_t> ad_features,
                   std::vector<double>& h_a, ServeScratch& s) const;
    ServingScores serve(std::span<const double> h_u,
                        std::span<const double> h_a, ServeScratch& s) const;

    struct BatchScratch {
        Matrix inputs, ping, pong, h_a, inter;
    };

    // Batched serving over a candidate list: the ad tower and the two
    // serving heads run layer-by-layer across the whole batch (one weight
    // pass per layer). Matches the per-ad path to float rounding.
    void score_candidates(const World& world, std::span<const int32_t> ad_ids,
                          std::span<const double> h_u, BatchScratch& s,
                          std::vector<ServingScores>& out) const;

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    size_t tower_dim() const { return config_.tower_dim; }
    const StudentConfig& config() const { return config_; }

    void bind();

private:
    StudentConfig config_;
    std::vector<size_t> early_user_slots_;
    std::vector<size_t> early_ad_slots_;
    ParamSet params_;
    EmbeddingSet user_emb_;
    EmbeddingSet ad_emb_;
    Mlp user_tower_;
    Mlp ad_tower_;
    Mlp ctr_head_;
    Mlp cqs_head_;
    Mlp teacher_head_;

    void select_user(std::span<const int32_t> all, std::vector<int32_t>& out) const;
    void select_ad(std::span<const int32_t> all, std::vector<int32_t>& out) const;
    void interaction(std::span<const double> h_u, std::span<const double> h_a,
                     std::vector<double>& x) const;

    // training scratch
    std::vector<int32_t> uf_, af_;
    std::vector<double> xu_, xa_, inter_;
    MlpTape tape_user_, tape_ad_, tape_ctr_, tape_cqs_, tape_teacher_;
    mutable std::vector<double> scratch_;
};

}  // namespace adlab
