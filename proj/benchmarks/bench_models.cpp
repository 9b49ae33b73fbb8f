#include <benchmark/benchmark.h>

#include <memory>

#include "adlab/rankers.hpp"
#include "adlab/world.hpp"

using namespace adlab;

namespace {

WorldConfig bench_world_config() {
    WorldConfig c;
    c.num_users = 1000;
    c.num_ads = 1000;
    c.seed = 1234;
    return c;
}

const World& bench_world() {
    static World world = World::generate(bench_world_config());
    return world;
}

}  // namespace

static void MlpForwardBackward(benchmark::State& state) {
    MlpSpec spec{264,
                 {{256, Activation::kRelu},
                  {128, Activation::kRelu},
                  {64, Activation::kRelu},
                  {1, Activation::kSigmoid}}};
    ParamSet ps;
    Mlp mlp("bench", spec);
    Rng rng(3);
    mlp.init(ps, rng);
    std::vector<double> input(264);
    for (auto& v : input) v = rng.normal();
    MlpTape tape;
    std::vector<double> dinput(264);
    const double upstream[1] = {0.3};
    for (auto _ : state) {
        mlp.forward(input, tape);
        std::fill(dinput.begin(), dinput.end(), 0.0);
        mlp.backward(tape, upstream, dinput);
        benchmark::DoNotOptimize(dinput[0]);
    }
}
BENCHMARK(MlpForwardBackward);

static void StudentScoreCandidates(benchmark::State& state) {
    const World& world = bench_world();
    StudentConfig sc;
    EarlyTwoTowerModel student(world.schema(), sc, 7);
    Rng rng(11);
    RankRequest req = world.sample_request(0, static_cast<size_t>(state.range(0)), rng);
    std::vector<double> h_u;
    student.user_vector(world.user(req.user_id).features, h_u);
    EarlyTwoTowerModel::BatchScratch scratch;
    std::vector<EarlyTwoTowerModel::ServingScores> out;
    for (auto _ : state) {
        student.score_candidates(world, req.candidates, h_u, scratch, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(StudentScoreCandidates)->Arg(40)->Arg(200);

static void FrozenTeacherScoreBatch(benchmark::State& state) {
    const World& world = bench_world();
    FinalModelConfig fc;
    FinalCtrModel teacher(world.schema(), fc, 9);
    FrozenWideScorer scorer(teacher, world);
    Rng rng(13);
    RankRequest req = world.sample_request(0, static_cast<size_t>(state.range(0)), rng);
    std::vector<double> user_part;
    scorer.prepare_user(world.user(req.user_id).features, user_part);
    ScorerScratch scratch;
    std::vector<double> out(req.candidates.size());
    for (auto _ : state) {
        scorer.score_batch(user_part, req.candidates, scratch, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(FrozenTeacherScoreBatch)->Arg(40)->Arg(200);
