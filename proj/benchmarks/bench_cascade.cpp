#include <benchmark/benchmark.h>

#include <memory>

#include "adlab/cascade.hpp"
#include "adlab/experiment.hpp"

using namespace adlab;

namespace {

struct CascadeFixture {
    ScenarioConfig config;
    World world;
    TeacherBundle teachers;
    std::unique_ptr<FinalStageScorers> finals;
    std::unique_ptr<EarlyTwoTowerModel> student;
    std::unique_ptr<StudentEarlyScorer> scorer;

    CascadeFixture()
        : config([] {
              ScenarioConfig c;
              c.seed = 99;
              c.world.num_users = 1000;
              c.world.num_ads = 1000;
              c.phases.teacher_warmup = 200;
              return c;
          }()),
          world(World::generate(config.resolved_world())),
          teachers(init_teachers(world, config)) {
        warm_up_teachers(world, config, teachers);
        finals = std::make_unique<FinalStageScorers>(
            *teachers.ctr, teachers.quality, world, config.scalars,
            config.quality_weight);
        student = std::make_unique<EarlyTwoTowerModel>(world.schema(),
                                                       config.student, 5);
        scorer = std::make_unique<StudentEarlyScorer>(*student);
    }
};

CascadeFixture& fixture() {
    static CascadeFixture f;
    return f;
}

}  // namespace

static void RunRequestFullFunnel(benchmark::State& state) {
    CascadeFixture& f = fixture();
    CascadeCounters counters;
    int64_t rid = 0;
    for (auto _ : state) {
        Rng rng(mix_seed(17, static_cast<uint64_t>(rid)));
        RankRequest req =
            f.world.sample_request(rid, f.config.stage.retrieval_size, rng);
        RequestTrace trace = run_request(f.world, req, *f.scorer, *f.finals,
                                         f.config.stage, 21, 22, counters);
        benchmark::DoNotOptimize(trace.records.size());
        ++rid;
    }
}
BENCHMARK(RunRequestFullFunnel);

static void GoldenSetReplay(benchmark::State& state) {
    CascadeFixture& f = fixture();
    Rng rng(23);
    RankRequest req = f.world.sample_request(0, f.config.stage.retrieval_size, rng);
    FinalStageScorers::UserContext ctx;
    f.finals->prepare_user(f.world.user(req.user_id), ctx);
    ScorerScratch scratch;
    std::vector<ScoredAd> scored;
    for (auto _ : state) {
        scored.clear();
        f.finals->score_batch(ctx, f.world, req.candidates, scratch, scored);
        GoldenSet golden = build_golden_set(req.request_id, scored,
                                            f.config.stage.auction_winners);
        benchmark::DoNotOptimize(golden.sum_total_value);
    }
}
BENCHMARK(GoldenSetReplay);
