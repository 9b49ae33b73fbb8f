#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "adlab/errors.hpp"
#include "adlab/rng.hpp"

namespace adlab {

struct WorldConfig {
    size_t num_users = 3000;
    size_t num_ads = 3000;
    size_t num_campaigns = 50;
    size_t latent_dim = 3;
    size_t num_quality_events = 3;  // event 0 is the Xout event
    double ctr_quality_correlation = 0.1;  // rho, correlation of click vs Xout logits
    double base_ctr_logit = -2.0;          // sigmoid(-2.0) ~= 0.119
    std::vector<double> base_quality_logits = {-2.2, -2.5, -2.5};
    double bid_log_mean = 1.2;
    double bid_log_sd = 0.6;
    double post_impression_fraction = 0.2;  // campaigns optimized post-impression
    uint64_t seed = 1;

    // generative tunables
    double click_logit_scale = 0.7;    // sd of u_click . a_click over random pairs
    double quality_logit_scale = 0.7;  // sd of u_quality . a_quality_i
    double conversion_propensity_min = 0.05;  // per-campaign CVR-proxy range
    double conversion_propensity_max = 0.30;

    // feature schema tunables
    size_t projections_per_latent = 5;
    size_t buckets_per_projection = 16;
    double early_feature_fraction = 0.6;  // share of bucket slots the early stage sees

    void validate() const;
};

struct Campaign {
    int32_t campaign_id = 0;
    bool post_impression_optimized = false;
    double conversion_propensity = 0.0;  // fixed propensity for the CVR proxy
};

struct UserProfile {
    int32_t user_id = 0;
    std::vector<double> latent_click;
    std::vector<double> latent_quality;  // rho-mixed with latent_click
    std::vector<int32_t> features;       // all user slots (id + bucketized projections)
};

struct AdCandidate {
    int32_t ad_id = 0;
    int32_t campaign_id = 0;
    double bid = 0.0;
    bool post_impression_optimized = false;
    std::vector<double> latent_click;
    std::vector<std::vector<double>> latent_quality;  // one per quality event
    std::vector<int32_t> features;                    // all ad slots
};

struct GroundTruthOutcome {
    bool click = false;
    std::vector<uint8_t> quality_events;  // realized per event, 0 = Xout
};

struct RankRequest {
    int64_t request_id = 0;
    int32_t user_id = 0;
    std::vector<int32_t> candidates;  // distinct ad ids from retrieval
};

// Slot layout shared by every model. The early stage sees the id slots plus
// the first early_per_group projections of each latent group; the final
// stage sees everything.
struct FeatureSchema {
    std::vector<size_t> user_vocabs;
    std::vector<size_t> ad_vocabs;
    std::vector<size_t> early_user_slots;
    std::vector<size_t> early_ad_slots;

    std::vector<size_t> early_user_vocabs() const;
    std::vector<size_t> early_ad_vocabs() const;
};

class World {
public:
    static World generate(const WorldConfig& config);

    const WorldConfig& config() const { return config_; }
    const FeatureSchema& schema() const { return schema_; }

    size_t num_users() const { return users_.size(); }
    size_t num_ads() const { return ads_.size(); }
    size_t num_campaigns() const { return campaigns_.size(); }

    const UserProfile& user(int32_t id) const { return users_.at(id); }
    const AdCandidate& ad(int32_t id) const { return ads_.at(id); }
    const Campaign& campaign(int32_t id) const { return campaigns_.at(id); }

    double true_click_logit(int32_t user_id, int32_t ad_id) const;
    double true_click_prob(int32_t user_id, int32_t ad_id) const;
    double true_quality_logit(int32_t user_id, int32_t ad_id, size_t event) const;
    std::vector<double> true_quality_event_probs(int32_t user_id, int32_t ad_id) const;

    // Campaign-stratified uniform retrieval of `retrieval_size` distinct ads.
    RankRequest sample_request(int64_t request_id, size_t retrieval_size,
                               Rng& rng) const;

    // Independent Bernoulli draws from the true propensities. Only meaningful
    // for impressed ads; draw order is click, then events 0..M-1.
    GroundTruthOutcome realize_outcomes(int32_t user_id, int32_t ad_id,
                                        Rng& rng) const;

    // Line-delimited text checkpoint; see save() for the field order.
    void save(std::ostream& out) const;
    static World load(std::istream& in);

    bool operator==(const World& other) const;

private:
    WorldConfig config_;
    FeatureSchema schema_;
    std::vector<Campaign> campaigns_;
    std::vector<UserProfile> users_;
    std::vector<AdCandidate> ads_;
    std::vector<std::vector<int32_t>> campaign_ads_;  // inventory per campaign

    void rebuild_campaign_index();
};

FeatureSchema build_feature_schema(const WorldConfig& config);

}  // namespace adlab
