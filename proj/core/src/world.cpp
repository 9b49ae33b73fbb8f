#include "adlab/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>

namespace adlab {

void WorldConfig::validate() const {
    if (num_users < 1 || num_ads < 1 || num_campaigns < 1)
        throw ConfigError("world: entity counts must be >= 1");
    if (latent_dim < 1) throw ConfigError("world: latent_dim must be >= 1");
    if (num_quality_events < 2)
        throw ConfigError("world: need at least 2 quality events (Xout + one more)");
    if (base_quality_logits.size() != num_quality_events)
        throw ConfigError("world: base_quality_logits size != num_quality_events");
    if (ctr_quality_correlation < -1.0 || ctr_quality_correlation > 1.0)
        throw ConfigError("world: ctr_quality_correlation outside [-1,1]");
    if (post_impression_fraction < 0.0 || post_impression_fraction > 1.0)
        throw ConfigError("world: post_impression_fraction outside [0,1]");
    if (early_feature_fraction < 0.0 || early_feature_fraction > 1.0)
        throw ConfigError("world: early_feature_fraction outside [0,1]");
    if (click_logit_scale <= 0.0 || quality_logit_scale <= 0.0)
        throw ConfigError("world: logit scales must be > 0");
    if (bid_log_sd < 0.0) throw ConfigError("world: bid_log_sd must be >= 0");
    if (projections_per_latent < 1 || buckets_per_projection < 2)
        throw ConfigError("world: degenerate feature schema");
}

namespace {

constexpr uint64_t kCampaignStream = 101;
constexpr uint64_t kUserStream = 102;
constexpr uint64_t kAdStream = 103;
constexpr uint64_t kProjectionStream = 104;

size_t early_slots_per_group(const WorldConfig& c) {
    auto e = static_cast<size_t>(
        std::lround(c.early_feature_fraction *
                    static_cast<double>(c.projections_per_latent)));
    return std::min(e, c.projections_per_latent);
}

// per-component latent sd; chosen so dot products have the configured sd
double component_sd(const WorldConfig& c) {
    return std::sqrt(c.click_logit_scale /
                     std::sqrt(static_cast<double>(c.latent_dim)));
}

// per-component sd of ad quality latents
double quality_component_sd(const WorldConfig& c) {
    double sigma = component_sd(c);
    return c.quality_logit_scale /
           (std::sqrt(static_cast<double>(c.latent_dim)) * sigma);
}

double standard_normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

int32_t bucketize(double value, double sd, size_t buckets) {
    double u = standard_normal_cdf(value / sd);
    auto b = static_cast<long>(u * static_cast<double>(buckets));
    b = std::clamp<long>(b, 0, static_cast<long>(buckets) - 1);
    return static_cast<int32_t>(b);
}

std::vector<double> draw_vector(Rng& rng, size_t dim, double sd) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal(0.0, sd);
    return v;
}

std::vector<double> unit_direction(Rng& rng, size_t dim) {
    std::vector<double> v(dim);
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            norm2 += x * x;
        }
    } while (norm2 == 0.0);
    double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
    return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

using DirectionGroup = std::vector<std::vector<double>>;

std::vector<int32_t> project_features(const std::vector<double>& latent,
                                      const DirectionGroup& dirs, double sd,
                                      size_t buckets) {
    std::vector<int32_t> out;
    out.reserve(dirs.size());
    for (const auto& d : dirs)
        out.push_back(bucketize(dot(latent, d), sd, buckets));
    return out;
}

void print_double(std::ostream& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
}

}  // namespace

std::vector<size_t> FeatureSchema::early_user_vocabs() const {
    std::vector<size_t> v;
    v.reserve(early_user_slots.size());
    for (size_t s : early_user_slots) v.push_back(user_vocabs[s]);
    return v;
}

std::vector<size_t> FeatureSchema::early_ad_vocabs() const {
    std::vector<size_t> v;
    v.reserve(early_ad_slots.size());
    for (size_t s : early_ad_slots) v.push_back(ad_vocabs[s]);
    return v;
}

FeatureSchema build_feature_schema(const WorldConfig& c) {
    FeatureSchema s;
    const size_t P = c.projections_per_latent;
    const size_t Q = c.buckets_per_projection;
    const size_t M = c.num_quality_events;
    const size_t e = early_slots_per_group(c);

    s.user_vocabs.push_back(c.num_users);  // slot 0: user id
    for (size_t j = 0; j < 2 * P; ++j) s.user_vocabs.push_back(Q);

    s.ad_vocabs.push_back(c.num_ads);        // slot 0: ad id
    s.ad_vocabs.push_back(c.num_campaigns);  // slot 1: campaign id
    for (size_t j = 0; j < (1 + M) * P; ++j) s.ad_vocabs.push_back(Q);

    s.early_user_slots.push_back(0);
    for (size_t g = 0; g < 2; ++g)
        for (size_t j = 0; j < e; ++j) s.early_user_slots.push_back(1 + g * P + j);

    s.early_ad_slots.push_back(0);
    s.early_ad_slots.push_back(1);
    for (size_t g = 0; g < 1 + M; ++g)
        for (size_t j = 0; j < e; ++j) s.early_ad_slots.push_back(2 + g * P + j);
    return s;
}

World World::generate(const WorldConfig& config) {
    config.validate();
    World w;
    w.config_ = config;
    w.schema_ = build_feature_schema(config);

    const size_t dim = config.latent_dim;
    const size_t M = config.num_quality_events;
    const double sigma = component_sd(config);
    const double sigma_q = quality_component_sd(config);
    const double rho = config.ctr_quality_correlation;
    const double rho_comp = std::sqrt(std::max(0.0, 1.0 - rho * rho));

    Rng camp_rng(mix_seed(config.seed, kCampaignStream));
    w.campaigns_.resize(config.num_campaigns);
    for (size_t c = 0; c < config.num_campaigns; ++c) {
        Campaign& camp = w.campaigns_[c];
        camp.campaign_id = static_cast<int32_t>(c);
        camp.post_impression_optimized =
            camp_rng.bernoulli(config.post_impression_fraction);
        camp.conversion_propensity = camp_rng.uniform(
            config.conversion_propensity_min, config.conversion_propensity_max);
    }

    Rng user_rng(mix_seed(config.seed, kUserStream));
    w.users_.resize(config.num_users);
    for (size_t u = 0; u < config.num_users; ++u) {
        UserProfile& user = w.users_[u];
        user.user_id = static_cast<int32_t>(u);
        user.latent_click = draw_vector(user_rng, dim, sigma);
        std::vector<double> indep = draw_vector(user_rng, dim, sigma);
        user.latent_quality.resize(dim);
        for (size_t i = 0; i < dim; ++i)
            user.latent_quality[i] =
                rho * user.latent_click[i] + rho_comp * indep[i];
    }

    Rng ad_rng(mix_seed(config.seed, kAdStream));
    w.ads_.resize(config.num_ads);
    for (size_t a = 0; a < config.num_ads; ++a) {
        AdCandidate& ad = w.ads_[a];
        ad.ad_id = static_cast<int32_t>(a);
        ad.campaign_id =
            static_cast<int32_t>(ad_rng.uniform_index(config.num_campaigns));
        ad.post_impression_optimized =
            w.campaigns_[ad.campaign_id].post_impression_optimized;
        ad.bid = ad_rng.lognormal(config.bid_log_mean, config.bid_log_sd);
        ad.latent_click = draw_vector(ad_rng, dim, sigma);
        ad.latent_quality.resize(M);
        // event 0 shares the click direction (scaled); this is what ties the
        // Xout logit to the click logit with correlation rho
        ad.latent_quality[0].resize(dim);
        const double scale = sigma_q / sigma;
        for (size_t i = 0; i < dim; ++i)
            ad.latent_quality[0][i] = scale * ad.latent_click[i];
        for (size_t m = 1; m < M; ++m)
            ad.latent_quality[m] = draw_vector(ad_rng, dim, sigma_q);
    }

    Rng proj_rng(mix_seed(config.seed, kProjectionStream));
    const size_t P = config.projections_per_latent;
    auto draw_group = [&] {
        DirectionGroup g;
        g.reserve(P);
        for (size_t j = 0; j < P; ++j) g.push_back(unit_direction(proj_rng, dim));
        return g;
    };
    DirectionGroup user_click_dirs = draw_group();
    DirectionGroup user_quality_dirs = draw_group();
    DirectionGroup ad_click_dirs = draw_group();
    std::vector<DirectionGroup> ad_quality_dirs;
    for (size_t m = 0; m < M; ++m) ad_quality_dirs.push_back(draw_group());

    const size_t Q = config.buckets_per_projection;
    for (auto& user : w.users_) {
        user.features.clear();
        user.features.push_back(user.user_id);
        auto f1 = project_features(user.latent_click, user_click_dirs, sigma, Q);
        auto f2 = project_features(user.latent_quality, user_quality_dirs, sigma, Q);
        user.features.insert(user.features.end(), f1.begin(), f1.end());
        user.features.insert(user.features.end(), f2.begin(), f2.end());
    }
    for (auto& ad : w.ads_) {
        ad.features.clear();
        ad.features.push_back(ad.ad_id);
        ad.features.push_back(ad.campaign_id);
        auto f = project_features(ad.latent_click, ad_click_dirs, sigma, Q);
        ad.features.insert(ad.features.end(), f.begin(), f.end());
        for (size_t m = 0; m < M; ++m) {
            auto fq = project_features(ad.latent_quality[m], ad_quality_dirs[m],
                                       sigma_q, Q);
            ad.features.insert(ad.features.end(), fq.begin(), fq.end());
        }
    }

    w.rebuild_campaign_index();
    return w;
}

void World::rebuild_campaign_index() {
    campaign_ads_.assign(campaigns_.size(), {});
    for (const auto& ad : ads_) campaign_ads_[ad.campaign_id].push_back(ad.ad_id);
}

double World::true_click_logit(int32_t user_id, int32_t ad_id) const {
    const UserProfile& u = users_.at(user_id);
    const AdCandidate& a = ads_.at(ad_id);
    return config_.base_ctr_logit + dot(u.latent_click, a.latent_click);
}

double World::true_click_prob(int32_t user_id, int32_t ad_id) const {
    return 1.0 / (1.0 + std::exp(-true_click_logit(user_id, ad_id)));
}

double World::true_quality_logit(int32_t user_id, int32_t ad_id,
                                 size_t event) const {
    const UserProfile& u = users_.at(user_id);
    const AdCandidate& a = ads_.at(ad_id);
    return config_.base_quality_logits.at(event) +
           dot(u.latent_quality, a.latent_quality.at(event));
}

std::vector<double> World::true_quality_event_probs(int32_t user_id,
                                                    int32_t ad_id) const {
    std::vector<double> probs(config_.num_quality_events);
    for (size_t m = 0; m < probs.size(); ++m)
        probs[m] =
            1.0 / (1.0 + std::exp(-true_quality_logit(user_id, ad_id, m)));
    return probs;
}

RankRequest World::sample_request(int64_t request_id, size_t retrieval_size,
                                  Rng& rng) const {
    if (retrieval_size > ads_.size())
        throw ConfigError("sample_request: retrieval_size exceeds inventory");
    RankRequest req;
    req.request_id = request_id;
    req.user_id = static_cast<int32_t>(rng.uniform_index(users_.size()));

    // campaign-stratified quotas: floor of the proportional share, remaining
    // slots distributed by fractional remainder
    const size_t n_camp = campaigns_.size();
    std::vector<size_t> quota(n_camp, 0);
    std::vector<double> rem(n_camp, 0.0);
    size_t assigned = 0;
    for (size_t c = 0; c < n_camp; ++c) {
        double share = static_cast<double>(retrieval_size) *
                       static_cast<double>(campaign_ads_[c].size()) /
                       static_cast<double>(ads_.size());
        quota[c] = static_cast<size_t>(share);
        rem[c] = share - static_cast<double>(quota[c]);
        assigned += quota[c];
    }
    size_t leftover = retrieval_size - assigned;
    while (leftover > 0) {
        double total = std::accumulate(rem.begin(), rem.end(), 0.0);
        size_t pick = n_camp;
        if (total <= 0.0) {
            // all remainders spent; give the slot to any campaign with spare ads
            for (size_t c = 0; c < n_camp; ++c) {
                if (quota[c] < campaign_ads_[c].size()) {
                    pick = c;
                    break;
                }
            }
        } else {
            double x = rng.uniform() * total;
            for (size_t c = 0; c < n_camp; ++c) {
                x -= rem[c];
                if (rem[c] > 0.0 && x <= 0.0) {
                    pick = c;
                    break;
                }
            }
            if (pick == n_camp) {  // numeric edge: take last with remainder
                for (size_t c = n_camp; c-- > 0;)
                    if (rem[c] > 0.0) {
                        pick = c;
                        break;
                    }
            }
        }
        if (pick == n_camp) throw ConfigError("sample_request: quota overflow");
        quota[pick] += 1;
        rem[pick] = 0.0;
        leftover -= 1;
    }

    // partial Fisher-Yates within each campaign
    req.candidates.reserve(retrieval_size);
    std::vector<int32_t> scratch;
    for (size_t c = 0; c < n_camp; ++c) {
        if (quota[c] == 0) continue;
        scratch = campaign_ads_[c];
        const size_t k = std::min(quota[c], scratch.size());
        for (size_t i = 0; i < k; ++i) {
            size_t j = i + rng.uniform_index(scratch.size() - i);
            std::swap(scratch[i], scratch[j]);
            req.candidates.push_back(scratch[i]);
        }
    }
    std::sort(req.candidates.begin(), req.candidates.end());
    return req;
}

GroundTruthOutcome World::realize_outcomes(int32_t user_id, int32_t ad_id,
                                           Rng& rng) const {
    GroundTruthOutcome out;
    out.click = rng.bernoulli(true_click_prob(user_id, ad_id));
    auto probs = true_quality_event_probs(user_id, ad_id);
    out.quality_events.resize(probs.size());
    for (size_t m = 0; m < probs.size(); ++m)
        out.quality_events[m] = rng.bernoulli(probs[m]) ? 1 : 0;
    return out;
}

void World::save(std::ostream& out) const {
    const WorldConfig& c = config_;
    out << "adlab-world 1\n";
    out << "counts " << c.num_users << ' ' << c.num_ads << ' '
        << c.num_campaigns << ' ' << c.latent_dim << ' '
        << c.num_quality_events << ' ' << c.seed << '\n';
    out << "gen ";
    for (double v : {c.ctr_quality_correlation, c.base_ctr_logit, c.bid_log_mean,
                     c.bid_log_sd, c.post_impression_fraction,
                     c.click_logit_scale, c.quality_logit_scale,
                     c.conversion_propensity_min, c.conversion_propensity_max,
                     c.early_feature_fraction}) {
        print_double(out, v);
        out << ' ';
    }
    out << '\n';
    out << "schema " << c.projections_per_latent << ' '
        << c.buckets_per_projection << '\n';
    out << "baseq";
    for (double v : c.base_quality_logits) {
        out << ' ';
        print_double(out, v);
    }
    out << '\n';
    for (const auto& camp : campaigns_) {
        out << "campaign " << camp.campaign_id << ' '
            << (camp.post_impression_optimized ? 1 : 0) << ' ';
        print_double(out, camp.conversion_propensity);
        out << '\n';
    }
    for (const auto& u : users_) {
        out << "user " << u.user_id;
        for (double v : u.latent_click) {
            out << ' ';
            print_double(out, v);
        }
        for (double v : u.latent_quality) {
            out << ' ';
            print_double(out, v);
        }
        for (int32_t f : u.features) out << ' ' << f;
        out << '\n';
    }
    for (const auto& a : ads_) {
        out << "ad " << a.ad_id << ' ' << a.campaign_id << ' ';
        print_double(out, a.bid);
        out << ' ' << (a.post_impression_optimized ? 1 : 0);
        for (double v : a.latent_click) {
            out << ' ';
            print_double(out, v);
        }
        for (const auto& q : a.latent_quality)
            for (double v : q) {
                out << ' ';
                print_double(out, v);
            }
        for (int32_t f : a.features) out << ' ' << f;
        out << '\n';
    }
    out << "end\n";
}

World World::load(std::istream& in) {
    std::string tag;
    int version = 0;
    in >> tag >> version;
    if (tag != "adlab-world" || version != 1)
        throw DataError("world checkpoint: bad header");
    World w;
    WorldConfig& c = w.config_;
    in >> tag;
    if (tag != "counts") throw DataError("world checkpoint: expected counts");
    in >> c.num_users >> c.num_ads >> c.num_campaigns >> c.latent_dim >>
        c.num_quality_events >> c.seed;
    in >> tag;
    if (tag != "gen") throw DataError("world checkpoint: expected gen");
    in >> c.ctr_quality_correlation >> c.base_ctr_logit >> c.bid_log_mean >>
        c.bid_log_sd >> c.post_impression_fraction >> c.click_logit_scale >>
        c.quality_logit_scale >> c.conversion_propensity_min >>
        c.conversion_propensity_max >> c.early_feature_fraction;
    in >> tag;
    if (tag != "schema") throw DataError("world checkpoint: expected schema");
    in >> c.projections_per_latent >> c.buckets_per_projection;
    in >> tag;
    if (tag != "baseq") throw DataError("world checkpoint: expected baseq");
    c.base_quality_logits.resize(c.num_quality_events);
    for (auto& v : c.base_quality_logits) in >> v;

    w.schema_ = build_feature_schema(c);
    const size_t user_slots = w.schema_.user_vocabs.size();
    const size_t ad_slots = w.schema_.ad_vocabs.size();

    w.campaigns_.resize(c.num_campaigns);
    for (auto& camp : w.campaigns_) {
        int pio = 0;
        in >> tag >> camp.campaign_id >> pio >> camp.conversion_propensity;
        if (tag != "campaign") throw DataError("world checkpoint: expected campaign");
        camp.post_impression_optimized = pio != 0;
    }
    w.users_.resize(c.num_users);
    for (auto& u : w.users_) {
        in >> tag >> u.user_id;
        if (tag != "user") throw DataError("world checkpoint: expected user");
        u.latent_click.resize(c.latent_dim);
        for (auto& v : u.latent_click) in >> v;
        u.latent_quality.resize(c.latent_dim);
        for (auto& v : u.latent_quality) in >> v;
        u.features.resize(user_slots);
        for (auto& f : u.features) in >> f;
    }
    w.ads_.resize(c.num_ads);
    for (auto& a : w.ads_) {
        int pio = 0;
        in >> tag >> a.ad_id >> a.campaign_id >> a.bid >> pio;
        if (tag != "ad") throw DataError("world checkpoint: expected ad");
        a.post_impression_optimized = pio != 0;
        a.latent_click.resize(c.latent_dim);
        for (auto& v : a.latent_click) in >> v;
        a.latent_quality.assign(c.num_quality_events,
                                std::vector<double>(c.latent_dim));
        for (auto& q : a.latent_quality)
            for (auto& v : q) in >> v;
        a.features.resize(ad_slots);
        for (auto& f : a.features) in >> f;
    }
    in >> tag;
    if (tag != "end" || !in) throw DataError("world checkpoint: truncated");
    w.rebuild_campaign_index();
    return w;
}

bool World::operator==(const World& other) const {
    auto cfg_eq = [](const WorldConfig& a, const WorldConfig& b) {
        return a.num_users == b.num_users && a.num_ads == b.num_ads &&
               a.num_campaigns == b.num_campaigns && a.latent_dim == b.latent_dim &&
               a.num_quality_events == b.num_quality_events &&
               a.ctr_quality_correlation == b.ctr_quality_correlation &&
               a.base_ctr_logit == b.base_ctr_logit &&
               a.base_quality_logits == b.base_quality_logits &&
               a.bid_log_mean == b.bid_log_mean && a.bid_log_sd == b.bid_log_sd &&
               a.post_impression_fraction == b.post_impression_fraction &&
               a.seed == b.seed && a.click_logit_scale == b.click_logit_scale &&
               a.quality_logit_scale == b.quality_logit_scale &&
               a.conversion_propensity_min == b.conversion_propensity_min &&
               a.conversion_propensity_max == b.conversion_propensity_max &&
               a.projections_per_latent == b.projections_per_latent &&
               a.buckets_per_projection == b.buckets_per_projection &&
               a.early_feature_fraction == b.early_feature_fraction;
    };
    if (!cfg_eq(config_, other.config_)) return false;
    if (campaigns_.size() != other.campaigns_.size() ||
        users_.size() != other.users_.size() || ads_.size() != other.ads_.size())
        return false;
    for (size_t i = 0; i < campaigns_.size(); ++i) {
        const auto& a = campaigns_[i];
        const auto& b = other.campaigns_[i];
        if (a.campaign_id != b.campaign_id ||
            a.post_impression_optimized != b.post_impression_optimized ||
            a.conversion_propensity != b.conversion_propensity)
            return false;
    }
    for (size_t i = 0; i < users_.size(); ++i) {
        const auto& a = users_[i];
        const auto& b = other.users_[i];
        if (a.user_id != b.user_id || a.latent_click != b.latent_click ||
            a.latent_quality != b.latent_quality || a.features != b.features)
            return false;
    }
    for (size_t i = 0; i < ads_.size(); ++i) {
        const auto& a = ads_[i];
        const auto& b = other.ads_[i];
        if (a.ad_id != b.ad_id || a.campaign_id != b.campaign_id ||
            a.bid != b.bid ||
            a.post_impression_optimized != b.post_impression_optimized ||
            a.latent_click != b.latent_click ||
            a.latent_quality != b.latent_quality || a.features != b.features)
            return false;
    }
    return true;
}

}  // namespace adlab
