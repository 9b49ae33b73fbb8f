#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "adlab/cascade.hpp"
#include "adlab/rankers.hpp"
#include "adlab/training.hpp"
#include "adlab/world.hpp"

namespace adlab {

enum class Variant {
    kMtlFull,
    kDedicatedCtrPlusCqs,
    kMtlNoTeacher,
    kMtlNoAugmentation,
    kDedicatedCqsOnly,
    kProductionBaseline,
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);
std::vector<Variant> ablation_matrix_variants();  // mtl_full + the three ablations

struct PhaseCounts {
    size_t teacher_warmup = 10000;
    size_t student_train = 50000;
    size_t eval = 5000;
    size_t warmup_samples_per_request = 30;  // oracle-labeled ads per warm-up request
};

struct IoOptions {
    bool save_training_log = false;  // bulky; off unless asked for
    bool save_eval_records = false;
    bool save_replay_log = true;     // per-request golden/recall rows
};

struct ScenarioConfig {
    WorldConfig world;  // world.seed is derived from `seed`, not configured
    StageConfig stage;
    TrainConfig train;
    StudentConfig student;
    FinalModelConfig final_ctr;
    QualityModelConfig quality_model;
    QualityScalars scalars;
    double quality_weight = 0.5;
    PhaseCounts phases;
    IoOptions io;
    uint64_t seed = 1;
    Variant variant = Variant::kMtlFull;

    void validate() const;
    // world config with the derived seed filled in
    WorldConfig resolved_world() const;
};

nlohmann::ordered_json scenario_to_json(const ScenarioConfig& config);
ScenarioConfig scenario_from_json(const nlohmann::ordered_json& j);

// "a.b.c=value" overrides; value parsed as JSON when possible, else string
void apply_override(nlohmann::ordered_json& config, const std::string& assignment);

ScenarioConfig load_scenario(const std::string& config_path,
                             const std::vector<std::string>& overrides);
ScenarioConfig default_scenario(const std::vector<std::string>& overrides = {});

}  // namespace adlab
