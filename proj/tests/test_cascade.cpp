#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <memory>
#include <set>

#include "adlab/cascade.hpp"
#include "adlab/rankers.hpp"
#include "test_util.hpp"

using namespace adlab;

namespace {

struct Fixture {
    World world;
    std::unique_ptr<FinalCtrModel> teacher_ctr;
    std::vector<std::unique_ptr<QualityEventModel>> quality;
    std::unique_ptr<FinalStageScorers> finals;
    std::unique_ptr<EarlyTwoTowerModel> student;
    std::unique_ptr<StudentEarlyScorer> early;

    explicit Fixture(uint64_t seed = 7, double quality_weight = 0.5)
        : world(World::generate(adlab::test::tiny_world_config(seed))) {
        FinalModelConfig fc;
        fc.embedding_dim = 4;
        fc.hidden = {16, 8};
        QualityModelConfig qc;
        qc.embedding_dim = 4;
        qc.hidden = {8};
        teacher_ctr = std::make_unique<FinalCtrModel>(world.schema(), fc,
                                                      mix_seed(seed, 1));
        for (size_t m = 0; m < world.config().num_quality_events; ++m)
            quality.push_back(std::make_unique<QualityEventModel>(
                m, world.schema(), qc, mix_seed(seed, 2 + m)));
        finals = std::make_unique<FinalStageScorers>(
            *teacher_ctr, quality, world, QualityScalars{{1.0, 2.0, 1.0}},
            quality_weight);
        StudentConfig sc;
        sc.embedding_dim = 4;
        sc.tower_hidden = {8};
        sc.tower_dim = 4;
        sc.head_hidden = {4};
        student = std::make_unique<EarlyTwoTowerModel>(world.schema(), sc,
                                                       mix_seed(seed, 9));
        early = std::make_unique<StudentEarlyScorer>(*student);
    }

    RequestTrace run(int64_t request_id, const StageConfig& cfg,
                     CascadeCounters& counters, uint64_t salt = 77) {
        Rng rng(mix_seed(salt, static_cast<uint64_t>(request_id)));
        RankRequest req =
            world.sample_request(request_id, cfg.retrieval_size, rng);
        return run_request(world, req, *early, *finals, cfg,
                           mix_seed(salt, 1), mix_seed(salt, 2), counters);
    }
};

StageConfig small_stage() {
    StageConfig cfg;
    cfg.retrieval_size = 40;
    cfg.early_pass = 12;
    cfg.auction_winners = 3;
    cfg.augmentation_rate = 0.3;
    return cfg;
}

}  // namespace

TEST_CASE("stage config validation") {
    StageConfig cfg = small_stage();
    cfg.validate(100);
    cfg.early_pass = 50;
    CHECK_THROWS_AS(cfg.validate(100), ConfigError);
}

TEST_CASE("funnel containment and auction brute-force correctness") {
    Fixture f(11);
    StageConfig cfg = small_stage();
    CascadeCounters counters;
    for (int64_t r = 0; r < 50; ++r) {
        Rng rng(mix_seed(5, static_cast<uint64_t>(r)));
        RankRequest req = f.world.sample_request(r, cfg.retrieval_size, rng);
        RequestTrace trace = run_request(f.world, req, *f.early, *f.finals, cfg,
                                         101, 102, counters);
        REQUIRE_FALSE(trace.skipped);
        // final candidates come from the retrieved set
        std::set<int32_t> retrieved(req.candidates.begin(), req.candidates.end());
        REQUIRE(trace.final_candidates.size() == cfg.early_pass);
        std::set<int32_t> final_ids;
        for (const auto& fc : trace.final_candidates) {
            CHECK(retrieved.count(fc.ad_id) == 1);
            final_ids.insert(fc.ad_id);
        }
        // winners are the K largest final total values (brute force)
        REQUIRE(trace.outcome.winners.size() == cfg.auction_winners);
        std::vector<std::pair<double, int32_t>> all;
        for (const auto& fc : trace.final_candidates)
            all.push_back({fc.tv_final, fc.ad_id});
        std::sort(all.begin(), all.end(), [](auto& a, auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (size_t k = 0; k < cfg.auction_winners; ++k) {
            CHECK(trace.outcome.winners[k].scored.ad_id == all[k].second);
            CHECK(final_ids.count(trace.outcome.winners[k].scored.ad_id) == 1);
        }
    }
}

TEST_CASE("no funnel when M_pass = N and K = N") {
    Fixture f(13);
    StageConfig cfg;
    cfg.retrieval_size = 20;
    cfg.early_pass = 20;
    cfg.auction_winners = 20;
    cfg.augmentation_rate = 0.5;
    CascadeCounters counters;
    RequestTrace trace = f.run(0, cfg, counters);
    CHECK(trace.outcome.winners.size() == 20);
    size_t impressions = 0;
    for (const auto& rec : trace.records) impressions += rec.impressed ? 1 : 0;
    CHECK(impressions == 20);
    CHECK(counters.augmented == 0);  // nothing left to augment
}

TEST_CASE("oracle early stage always passes the final winners through") {
    Fixture f(17);
    OracleEarlyScorer oracle(*f.finals);
    StageConfig cfg = small_stage();
    CascadeCounters counters;
    for (int64_t r = 0; r < 30; ++r) {
        Rng rng(mix_seed(7, static_cast<uint64_t>(r)));
        RankRequest req = f.world.sample_request(r, cfg.retrieval_size, rng);
        RequestTrace trace = run_request(f.world, req, oracle, *f.finals, cfg,
                                         103, 104, counters);
        // early ranking == final ranking, so early TV == final TV on the
        // funnel and the top-K is identical
        for (const auto& fc : trace.final_candidates)
            CHECK(fc.tv_early == fc.tv_final);  // bit-identical
    }
}

TEST_CASE("record counts: K impressions, r-thinned augmentation") {
    Fixture f(19);
    StageConfig cfg = small_stage();
    CascadeCounters counters;
    const size_t reqs = 1000;
    for (int64_t r = 0; r < static_cast<int64_t>(reqs); ++r)
        f.run(r, cfg, counters);
    CHECK(counters.impressions == reqs * cfg.auction_winners);
    // binomial bound on augmented records
    double n = static_cast<double>(reqs) *
               static_cast<double>(cfg.early_pass - cfg.auction_winners);
    double mean = n * cfg.augmentation_rate;
    double sd = std::sqrt(n * cfg.augmentation_rate * (1 - cfg.augmentation_rate));
    CHECK(std::abs(static_cast<double>(counters.augmented) - mean) < 3.0 * sd);
}

TEST_CASE("augmentation rate 0 and 1 are exact") {
    Fixture f(23);
    StageConfig cfg = small_stage();
    cfg.augmentation_rate = 0.0;
    CascadeCounters c0;
    RequestTrace t0 = f.run(0, cfg, c0);
    CHECK(c0.augmented == 0);
    for (const auto& rec : t0.records) CHECK(rec.impressed);

    cfg.augmentation_rate = 1.0;
    CascadeCounters c1;
    RequestTrace t1 = f.run(0, cfg, c1);
    CHECK(c1.augmented == cfg.early_pass - cfg.auction_winners);
    CHECK(t1.records.size() == cfg.early_pass);
}

TEST_CASE("augmented records carry pseudo-labels and no outcomes") {
    Fixture f(29);
    StageConfig cfg = small_stage();
    cfg.augmentation_rate = 1.0;
    CascadeCounters counters;
    RequestTrace trace = f.run(3, cfg, counters);
    size_t augmented = 0;
    for (const auto& rec : trace.records) {
        if (!rec.augmented) continue;
        ++augmented;
        CHECK_FALSE(rec.impressed);
        CHECK(rec.quality_event_labels.empty());
        CHECK(rec.teacher_ectr > 0.0);
        CHECK(rec.teacher_ectr < 1.0);
        CHECK(std::isfinite(rec.final_cqs));
    }
    CHECK(augmented == cfg.early_pass - cfg.auction_winners);
}

TEST_CASE("traffic mask and final CQS bounds on every record") {
    Fixture f(31);
    StageConfig cfg = small_stage();
    CascadeCounters counters;
    double total = QualityScalars{{1.0, 2.0, 1.0}}.total();
    size_t masked = 0;
    for (int64_t r = 0; r < 200; ++r) {
        RequestTrace trace = f.run(r, cfg, counters);
        for (const auto& rec : trace.records) {
            const AdCandidate& ad = f.world.ad(rec.ad_id);
            CHECK(rec.ctr_traffic == !ad.post_impression_optimized);
            if (!rec.ctr_traffic) {
                ++masked;
                if (rec.impressed)
                    CHECK(rec.quality_event_labels.size() ==
                          f.world.config().num_quality_events);
            }
            CHECK(rec.final_cqs >= 0.0);
            CHECK(rec.final_cqs <= total);
        }
    }
    CHECK(masked > 0);  // post-impression traffic exists in the log
}

TEST_CASE("winner click rate matches the winners' mean true CTR") {
    Fixture f(37);
    StageConfig cfg = small_stage();
    CascadeCounters counters;
    double clicks = 0.0, expected = 0.0;
    size_t n = 0;
    for (int64_t r = 0; r < 2000; ++r) {
        RequestTrace trace = f.run(r, cfg, counters, 999);
        for (const auto& w : trace.outcome.winners) {
            clicks += w.outcome.click ? 1.0 : 0.0;
            expected += f.world.true_click_prob(trace.outcome.user_id,
                                                w.scored.ad_id);
            n += 1;
        }
    }
    double sd = std::sqrt(expected * (1.0 - expected / n));
    CHECK(std::abs(clicks - expected) < 3.0 * std::sqrt(expected));
    (void)sd;
}

TEST_CASE("logs are deterministic given identical salts") {
    Fixture f(41);
    StageConfig cfg = small_stage();
    CascadeCounters c1, c2;
    for (int64_t r = 0; r < 20; ++r) {
        RequestTrace a = f.run(r, cfg, c1, 555);
        RequestTrace b = f.run(r, cfg, c2, 555);
        REQUIRE(a.records.size() == b.records.size());
        for (size_t i = 0; i < a.records.size(); ++i)
            CHECK(record_to_line(a.records[i]) == record_to_line(b.records[i]));
    }
}

TEST_CASE("rescored mode widens the augmentation pool to all retrieved ads") {
    Fixture f(43);
    StageConfig cfg = small_stage();
    cfg.augmentation_rate = 0.5;

    CascadeCounters base_counters;
    std::set<int32_t> base_pool;     // augmented ads under default mode
    std::set<int32_t> funnel_ads;    // final-stage candidates
    std::set<int32_t> wide_pool;     // augmented ads under rescored mode
    std::set<int32_t> retrieved;

    for (int64_t r = 0; r < 100; ++r) {
        Rng rng(mix_seed(11, static_cast<uint64_t>(r)));
        RankRequest req = f.world.sample_request(r, cfg.retrieval_size, rng);
        for (int32_t id : req.candidates) retrieved.insert(id);

        RequestTrace t1 = run_request(f.world, req, *f.early, *f.finals, cfg,
                                      201, 202, base_counters);
        for (const auto& fc : t1.final_candidates) funnel_ads.insert(fc.ad_id);
        for (const auto& rec : t1.records)
            if (rec.augmented) base_pool.insert(rec.ad_id);

        StageConfig wide = cfg;
        wide.augmentation_source =
            AugmentationSource::kEarlyStageNonImpressionRescored;
        CascadeCounters wc;
        RequestTrace t2 = run_request(f.world, req, *f.early, *f.finals, wide,
                                      201, 202, wc);
        for (const auto& rec : t2.records) {
            if (!rec.augmented) continue;
            wide_pool.insert(rec.ad_id);
            // pseudo-label equals the direct frozen-teacher prediction
            FinalStageScorers::UserContext ctx;
            f.finals->prepare_user(f.world.user(req.user_id), ctx);
            ScorerScratch s;
            CHECK(rec.teacher_ectr == f.finals->ectr(ctx, rec.ad_id, s));
        }
    }
    // default pool is inside the funnel; rescored mode escapes it
    for (int32_t id : base_pool) CHECK(funnel_ads.count(id) == 1);
    size_t outside = 0;
    for (int32_t id : wide_pool)
        if (funnel_ads.count(id) == 0) ++outside;
    CHECK(outside > 0);
    for (int32_t id : wide_pool) CHECK(retrieved.count(id) == 1);
}

TEST_CASE("rescored mode disabled produces no early-rescored records") {
    Fixture f(47);
    StageConfig cfg = small_stage();
    CascadeCounters counters;
    for (int64_t r = 0; r < 20; ++r) f.run(r, cfg, counters);
    CHECK(counters.early_rescored == 0);
}

TEST_CASE("empty candidate set is skipped and counted") {
    Fixture f(53);
    RankRequest req;
    req.request_id = 1;
    req.user_id = 0;
    StageConfig cfg = small_stage();
    CascadeCounters counters;
    RequestTrace trace = run_request(f.world, req, *f.early, *f.finals, cfg,
                                     301, 302, counters);
    CHECK(trace.skipped);
    CHECK(counters.skipped_empty == 1);
    CHECK(trace.records.empty());
}

TEST_CASE("training records round-trip through the line format") {
    Fixture f(59);
    StageConfig cfg = small_stage();
    cfg.augmentation_rate = 1.0;
    CascadeCounters counters;
    RequestTrace trace = f.run(6, cfg, counters);
    REQUIRE(trace.records.size() > 3);
    for (const auto& rec : trace.records) {
        TrainingRecord back = record_from_line(record_to_line(rec));
        CHECK(back.request_id == rec.request_id);
        CHECK(back.user_id == rec.user_id);
        CHECK(back.ad_id == rec.ad_id);
        CHECK(back.user_features == rec.user_features);
        CHECK(back.ad_features == rec.ad_features);
        CHECK(back.bid == rec.bid);
        CHECK(back.impressed == rec.impressed);
        CHECK(back.click_label == rec.click_label);
        CHECK(back.quality_event_labels == rec.quality_event_labels);
        CHECK(back.teacher_ectr == rec.teacher_ectr);
        CHECK(back.final_cqs == rec.final_cqs);
        CHECK(back.ctr_traffic == rec.ctr_traffic);
        CHECK(back.augmented == rec.augmented);
    }
}
