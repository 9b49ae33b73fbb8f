#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "adlab/checkpoint.hpp"
#include "adlab/config.hpp"
#include "adlab/metrics.hpp"
#include "adlab/training.hpp"

namespace adlab {

struct TeacherBundle {
    std::unique_ptr<FinalCtrModel> ctr;
    std::vector<std::unique_ptr<QualityEventModel>> quality;
};

TeacherBundle init_teachers(const World& world, const ScenarioConfig& config);
// oracle-labeled warm-up over uniformly sampled retrieval candidates
void warm_up_teachers(const World& world, const ScenarioConfig& config,
                      TeacherBundle& teachers);

// The student side of one variant: primary model, optional dedicated CQS
// model (dedicated_ctr_plus_cqs), and the serving flags.
struct StudentBundle {
    std::unique_ptr<EarlyTwoTowerModel> primary;
    std::unique_ptr<EarlyTwoTowerModel> secondary;
    bool constant_quality = false;
    TrainConfig primary_train;
    TrainConfig secondary_train;
    StageConfig stage;  // variant-adjusted funnel (augmentation may be off)
};

StudentBundle make_students(const World& world, const ScenarioConfig& config,
                            Variant variant);

struct TrainPhaseSummary {
    CascadeCounters cascade;
    StreamTrainer::Counters primary;
    StreamTrainer::Counters secondary;
    std::vector<WindowTelemetry> telemetry;
};

struct VariantResult {
    Variant variant = Variant::kMtlFull;
    MetricsReport metrics;
    HeadEvalMetrics heads;
    TrainPhaseSummary train;
};

struct RunReport {
    nlohmann::ordered_json config_echo;
    std::vector<VariantResult> results;

    const VariantResult* find(Variant v) const;
};

// Persists run outputs under one directory:
//   report.json / report.csv / report.md
//   checkpoint/world.txt, teacher_ctr.params, quality_<i>.params,
//              student_<variant>.params, student_cqs_<variant>.params
//   logs/telemetry_<variant>.jsonl, replay_<variant>.jsonl,
//        train_<variant>.jsonl, eval_records_<variant>.jsonl (optional)
class ArtifactWriter {
public:
    ArtifactWriter(std::filesystem::path root, const ScenarioConfig& config);

    void save_world(const World& world);
    void save_teachers(const TeacherBundle& teachers);
    void save_students(Variant variant, const StudentBundle& students);
    void save_telemetry(Variant variant,
                        const std::vector<WindowTelemetry>& telemetry);
    void save_report(const RunReport& report);

    // nullptr when the corresponding io option is off
    std::ostream* training_log(Variant variant);
    std::ostream* eval_records_log(Variant variant);
    std::ostream* replay_log(Variant variant);

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    IoOptions io_;
    std::map<std::string, std::unique_ptr<std::ofstream>> streams_;

    std::ostream* open_log(const std::string& name);
};

// Golden-set replay plus the production funnel over fresh requests.
// `heads_model` may be null (e.g. when the early scorer is the consistency
// oracle and there is no student to evaluate).
struct EvalPhaseResult {
    MetricsReport metrics;
    HeadEvalMetrics heads;
    MetricsAccumulator raw;  // per-request values behind the summaries
};

EvalPhaseResult run_eval_phase(const World& world,
                               const FinalStageScorers& finals,
                               const EarlyScorer& scorer,
                               const EarlyTwoTowerModel* heads_model,
                               const ScenarioConfig& config, Variant variant,
                               ArtifactWriter* artifacts = nullptr);

// Runs the scenario's single variant end to end:
// world -> teacher warm-up -> freeze -> student stream training -> eval.
RunReport run_scenario(const ScenarioConfig& config,
                       ArtifactWriter* artifacts = nullptr);

// mtl_full plus the Table-3 ablations over a shared world, shared teacher
// checkpoint, and shared request streams.
RunReport run_ablation_matrix(const ScenarioConfig& config,
                              ArtifactWriter* artifacts = nullptr);

// One run per value applied at `dot_path`; shared seed across values.
std::vector<RunReport> run_sweep(const nlohmann::ordered_json& base_config,
                                 const std::string& dot_path,
                                 const std::vector<std::string>& values,
                                 const std::filesystem::path* out_root = nullptr);

// Re-evaluates saved checkpoints: fresh eval phase, no retraining.
RunReport replay_eval(const std::filesystem::path& run_dir,
                      ArtifactWriter* artifacts = nullptr);

nlohmann::ordered_json report_to_json(const RunReport& report);
std::string report_to_csv(const RunReport& report);
std::string report_to_markdown(const RunReport& report);
std::string sweep_to_csv(const std::string& dot_path,
                         const std::vector<std::string>& values,
                         const std::vector<RunReport>& reports);

}  // namespace adlab
