#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "adlab/experiment.hpp"
#include "test_util.hpp"

using namespace adlab;
namespace fs = std::filesystem;

namespace {

// scenario small enough for sub-second runs
ScenarioConfig tiny_scenario(uint64_t seed) {
    ScenarioConfig c;
    c.seed = seed;
    c.world.num_users = 300;
    c.world.num_ads = 400;
    c.world.num_campaigns = 8;
    c.world.latent_dim = 4;
    c.world.projections_per_latent = 3;
    c.stage.retrieval_size = 40;
    c.stage.early_pass = 12;
    c.stage.auction_winners = 3;
    c.student.embedding_dim = 4;
    c.student.tower_hidden = {16};
    c.student.tower_dim = 8;
    c.student.head_hidden = {8};
    c.final_ctr.embedding_dim = 4;
    c.final_ctr.hidden = {32, 16};
    c.quality_model.embedding_dim = 4;
    c.quality_model.hidden = {16};
    c.phases.teacher_warmup = 150;
    c.phases.student_train = 250;
    c.phases.eval = 120;
    c.phases.warmup_samples_per_request = 6;
    c.train.eval_window = 1000;
    c.io.save_replay_log = false;
    return c;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / ("adlab_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// early scorer with hash-random scores, independent of every ad property
class RandomEarlyScorer : public EarlyScorer {
public:
    void score(const World&, const RankRequest& request,
               std::vector<EarlyTwoTowerModel::ServingScores>& out)
        const override {
        out.resize(request.candidates.size());
        for (size_t i = 0; i < request.candidates.size(); ++i) {
            Rng rng(mix_seed(static_cast<uint64_t>(request.request_id),
                             static_cast<uint64_t>(request.candidates[i]), 0xA5));
            out[i].y_ctr = rng.uniform();
            out[i].y_cqs = 0.0;
        }
    }
};

}  // namespace

TEST_CASE("config JSON round-trips and dot-path overrides apply") {
    ScenarioConfig c = tiny_scenario(3);
    auto j = scenario_to_json(c);
    ScenarioConfig back = scenario_from_json(j);
    CHECK(scenario_to_json(back) == j);

    apply_override(j, "train.weights.w_cqs=2.5");
    apply_override(j, "stage.augmentation_rate=0.7");
    apply_override(j, "world.base_quality_logits=[-1.0,-2.0,-3.0]");
    apply_override(j, "variant=mtl_no_teacher");
    ScenarioConfig tweaked = scenario_from_json(j);
    CHECK(tweaked.train.weights.w_cqs == 2.5);
    CHECK(tweaked.stage.augmentation_rate == 0.7);
    CHECK(tweaked.world.base_quality_logits == std::vector<double>{-1.0, -2.0, -3.0});
    CHECK(tweaked.variant == Variant::kMtlNoTeacher);

    CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
    auto bad = j;
    apply_override(bad, "world.num_ads=0");
    CHECK_THROWS_AS(scenario_from_json(bad), ConfigError);
}

TEST_CASE("variant names round-trip") {
    for (Variant v : {Variant::kMtlFull, Variant::kDedicatedCtrPlusCqs,
                      Variant::kMtlNoTeacher, Variant::kMtlNoAugmentation,
                      Variant::kDedicatedCqsOnly, Variant::kProductionBaseline})
        CHECK(variant_from_name(variant_name(v)) == v);
    CHECK_THROWS_AS(variant_from_name("bogus"), ConfigError);
}

TEST_CASE("parameter checkpoints round-trip bit for bit") {
    World w = World::generate(adlab::test::tiny_world_config(5));
    StudentConfig sc;
    sc.embedding_dim = 4;
    sc.tower_hidden = {8};
    sc.tower_dim = 4;
    sc.head_hidden = {4};
    EarlyTwoTowerModel a(w.schema(), sc, 71);
    TempDir dir("ckpt");
    save_params(a.params(), (dir.path / "a.params").string());

    EarlyTwoTowerModel b(w.schema(), sc, 72);  // different init
    load_params(b.params(), (dir.path / "a.params").string());
    for (const auto& [name, p] : a.params()) {
        const Param& q = b.params().at(name);
        for (size_t i = 0; i < p.value.size(); ++i)
            CHECK(p.value.data()[i] == q.value.data()[i]);
    }

    // shape mismatch is rejected
    StudentConfig other = sc;
    other.tower_dim = 8;
    EarlyTwoTowerModel c(w.schema(), other, 73);
    CHECK_THROWS_AS(load_params(c.params(), (dir.path / "a.params").string()),
                    DataError);
}

TEST_CASE("run_scenario is deterministic down to the report bytes") {
    TempDir d1("det1"), d2("det2");
    ScenarioConfig c = tiny_scenario(17);
    {
        ArtifactWriter w1(d1.path, c);
        run_scenario(c, &w1);
    }
    {
        ArtifactWriter w2(d2.path, c);
        run_scenario(c, &w2);
    }
    CHECK(file_bytes(d1.path / "report.json") == file_bytes(d2.path / "report.json"));
    CHECK(file_bytes(d1.path / "report.csv") == file_bytes(d2.path / "report.csv"));
    CHECK(file_bytes(d1.path / "checkpoint" / "world.txt") ==
          file_bytes(d2.path / "checkpoint" / "world.txt"));
    CHECK(file_bytes(d1.path / "checkpoint" / "teacher_ctr.params") ==
          file_bytes(d2.path / "checkpoint" / "teacher_ctr.params"));
    CHECK(file_bytes(d1.path / "checkpoint" / "student_mtl_full.params") ==
          file_bytes(d2.path / "checkpoint" / "student_mtl_full.params"));
}

TEST_CASE("ablation matrix shares the world and teachers with a plain run") {
    TempDir d1("iso1"), d2("iso2");
    ScenarioConfig c = tiny_scenario(23);
    {
        ArtifactWriter w1(d1.path, c);
        run_scenario(c, &w1);
    }
    ScenarioConfig m = c;
    {
        ArtifactWriter w2(d2.path, m);
        RunReport report = run_ablation_matrix(m, &w2);
        REQUIRE(report.results.size() == 4);
        CHECK(report.results[0].variant == Variant::kMtlFull);
        CHECK(report.find(Variant::kMtlNoAugmentation) != nullptr);
        CHECK(report.find(Variant::kMtlNoTeacher) != nullptr);
        CHECK(report.find(Variant::kDedicatedCtrPlusCqs) != nullptr);
        // differences between variants are attributable to training flags
        // alone: same world, same teacher checkpoint
        CHECK(file_bytes(d1.path / "checkpoint" / "world.txt") ==
              file_bytes(d2.path / "checkpoint" / "world.txt"));
        CHECK(file_bytes(d1.path / "checkpoint" / "teacher_ctr.params") ==
              file_bytes(d2.path / "checkpoint" / "teacher_ctr.params"));
        // the no-augmentation variant consumed zero augmented records
        const VariantResult* na = report.find(Variant::kMtlNoAugmentation);
        CHECK(na->train.cascade.augmented == 0);
        CHECK(na->train.primary.augmented_consumed == 0);
        // mtl_full consumed plenty
        const VariantResult* full = report.find(Variant::kMtlFull);
        CHECK(full->train.primary.augmented_consumed > 0);
        // the delta table carries exactly the non-base variants
        auto j = report_to_json(report);
        REQUIRE(j.contains("deltas_vs_mtl_full_pct"));
        CHECK(j["deltas_vs_mtl_full_pct"].size() == 3);
    }
}

TEST_CASE("mtl_no_teacher equals mtl_full with w_teacher forced to zero") {
    ScenarioConfig c = tiny_scenario(29);
    c.variant = Variant::kMtlNoTeacher;
    RunReport a = run_scenario(c);

    ScenarioConfig z = tiny_scenario(29);
    z.variant = Variant::kMtlFull;
    z.train.weights.w_teacher = 0.0;
    RunReport b = run_scenario(z);

    const auto& ma = a.results[0].metrics.request_metrics;
    const auto& mb = b.results[0].metrics.request_metrics;
    for (const auto& [name, summary] : ma) {
        CHECK(summary.mean == mb.at(name).mean);  // bit-identical runs
        CHECK(summary.sd == mb.at(name).sd);
    }
}

TEST_CASE("replay-eval reproduces the saved run's evaluation exactly") {
    TempDir dir("replay");
    ScenarioConfig c = tiny_scenario(31);
    RunReport original;
    {
        ArtifactWriter w(dir.path, c);
        original = run_scenario(c, &w);
    }
    RunReport replayed = replay_eval(dir.path);
    REQUIRE(replayed.results.size() == 1);
    const auto& orig = original.results[0].metrics;
    const auto& back = replayed.results[0].metrics;
    for (const auto& [name, s] : orig.request_metrics) {
        CHECK(back.request_metrics.at(name).mean == s.mean);
        CHECK(back.request_metrics.at(name).ci_lo == s.ci_lo);
        CHECK(back.request_metrics.at(name).ci_hi == s.ci_hi);
    }
    for (const auto& [name, v] : orig.pooled_metrics) {
        double r = back.pooled_metrics.at(name);
        if (std::isnan(v))
            CHECK(std::isnan(r));
        else
            CHECK(r == v);
    }
}

TEST_CASE("sweep: empty value list succeeds; values land in the config echo") {
    ScenarioConfig c = tiny_scenario(37);
    auto base = scenario_to_json(c);
    auto none = run_sweep(base, "train.weights.w_cqs", {});
    CHECK(none.empty());

    auto reports = run_sweep(base, "train.weights.w_cqs", {"0.5", "1.5"});
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].config_echo["train"]["weights"]["w_cqs"] == 0.5);
    CHECK(reports[1].config_echo["train"]["weights"]["w_cqs"] == 1.5);
    std::string csv = sweep_to_csv("train.weights.w_cqs", {"0.5", "1.5"}, reports);
    CHECK(csv.find("train.weights.w_cqs") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

    CHECK_THROWS_AS(run_sweep(base, "train.weights.w_cqs", {"-3.0"}),
                    ConfigError);
}

TEST_CASE("random early ranking recalls K/N of the golden set") {
    ScenarioConfig c = tiny_scenario(41);
    c.world.bid_log_sd = 0.0;  // equal bids so early ranking is pure noise
    c.phases.student_train = 0;
    c.phases.eval = 500;
    World world = World::generate(c.resolved_world());
    TeacherBundle teachers = init_teachers(world, c);
    warm_up_teachers(world, c, teachers);
    FinalStageScorers finals(*teachers.ctr, teachers.quality, world, c.scalars,
                             c.quality_weight);
    RandomEarlyScorer random_scorer;
    EvalPhaseResult eval = run_eval_phase(world, finals, random_scorer, nullptr,
                                          c, Variant::kMtlFull);
    const MetricSummary& hard = eval.metrics.request_metrics.at("hard_recall");
    double expectation = static_cast<double>(c.stage.auction_winners) /
                         static_cast<double>(c.stage.retrieval_size);
    double se = hard.sd / std::sqrt(static_cast<double>(hard.count));
    INFO("hard recall mean ", hard.mean, " expectation ", expectation);
    CHECK(std::abs(hard.mean - expectation) < 3.0 * se + 1e-9);
}

TEST_CASE("an eval-only scenario runs and reports finite recall spreads") {
    ScenarioConfig c = tiny_scenario(43);
    c.phases.student_train = 0;  // student stays at initialization
    RunReport report = run_scenario(c);
    const auto& m = report.results[0].metrics.request_metrics;
    CHECK(std::isfinite(m.at("hard_recall").mean));
    CHECK(std::isfinite(m.at("hard_recall").sd));
    CHECK(std::isfinite(m.at("soft_recall").sd));
    CHECK(m.at("hard_recall").count + m.at("hard_recall").undefined_count ==
          c.phases.eval);
}

TEST_CASE("markdown and csv reports carry every variant") {
    ScenarioConfig c = tiny_scenario(47);
    RunReport report = run_scenario(c);
    std::string md = report_to_markdown(report);
    CHECK(md.find("mtl_full") != std::string::npos);
    CHECK(md.find("hard_recall") != std::string::npos);
    std::string csv = report_to_csv(report);
    CHECK(csv.find("variant,section,metric") == 0);
    CHECK(csv.find("mtl_full,request,hard_recall") != std::string::npos);
    CHECK(csv.find("mtl_full,pooled,ne_ctr") != std::string::npos);
}
