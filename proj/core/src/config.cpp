#include "adlab/config.hpp"

#include <fstream>

namespace adlab {

using ordered_json = nlohmann::ordered_json;

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::kMtlFull: return "mtl_full";
        case Variant::kDedicatedCtrPlusCqs: return "dedicated_ctr_plus_cqs";
        case Variant::kMtlNoTeacher: return "mtl_no_teacher";
        case Variant::kMtlNoAugmentation: return "mtl_no_augmentation";
        case Variant::kDedicatedCqsOnly: return "dedicated_cqs_only";
        case Variant::kProductionBaseline: return "production_baseline";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    for (Variant v : {Variant::kMtlFull, Variant::kDedicatedCtrPlusCqs,
                      Variant::kMtlNoTeacher, Variant::kMtlNoAugmentation,
                      Variant::kDedicatedCqsOnly, Variant::kProductionBaseline})
        if (name == variant_name(v)) return v;
    throw ConfigError("unknown variant: " + name);
}

std::vector<Variant> ablation_matrix_variants() {
    return {Variant::kMtlFull, Variant::kDedicatedCtrPlusCqs,
            Variant::kMtlNoTeacher, Variant::kMtlNoAugmentation};
}

void ScenarioConfig::validate() const {
    world.validate();
    stage.validate(world.num_ads);
    train.validate();
    scalars.validate(world.num_quality_events);
    if (quality_weight < 0.0)
        throw ConfigError("quality_weight must be >= 0");
    if (phases.eval < 1) throw ConfigError("phases.eval must be >= 1");
    if (phases.warmup_samples_per_request < 1)
        throw ConfigError("phases.warmup_samples_per_request must be >= 1");
    if (phases.warmup_samples_per_request > stage.retrieval_size)
        throw ConfigError("warmup_samples_per_request exceeds retrieval_size");
}

WorldConfig ScenarioConfig::resolved_world() const {
    WorldConfig w = world;
    w.seed = mix_seed(seed, 0x5741524c44ULL);  // world stream
    return w;
}

namespace {

const char* optimizer_name(OptimizerAlgo a) {
    return a == OptimizerAlgo::kSgd ? "sgd" : "adagrad";
}

OptimizerAlgo optimizer_from_name(const std::string& s) {
    if (s == "sgd") return OptimizerAlgo::kSgd;
    if (s == "adagrad") return OptimizerAlgo::kAdagrad;
    throw ConfigError("unknown optimizer: " + s);
}

template <typename T>
void get_if_present(const ordered_json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ordered_json scenario_to_json(const ScenarioConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["variant"] = variant_name(c.variant);
    j["world"] = {
        {"num_users", c.world.num_users},
        {"num_ads", c.world.num_ads},
        {"num_campaigns", c.world.num_campaigns},
        {"latent_dim", c.world.latent_dim},
        {"num_quality_events", c.world.num_quality_events},
        {"ctr_quality_correlation", c.world.ctr_quality_correlation},
        {"base_ctr_logit", c.world.base_ctr_logit},
        {"base_quality_logits", c.world.base_quality_logits},
        {"bid_log_mean", c.world.bid_log_mean},
        {"bid_log_sd", c.world.bid_log_sd},
        {"post_impression_fraction", c.world.post_impression_fraction},
        {"click_logit_scale", c.world.click_logit_scale},
        {"quality_logit_scale", c.world.quality_logit_scale},
        {"conversion_propensity_min", c.world.conversion_propensity_min},
        {"conversion_propensity_max", c.world.conversion_propensity_max},
        {"projections_per_latent", c.world.projections_per_latent},
        {"buckets_per_projection", c.world.buckets_per_projection},
        {"early_feature_fraction", c.world.early_feature_fraction},
    };
    j["stage"] = {
        {"retrieval_size", c.stage.retrieval_size},
        {"early_pass", c.stage.early_pass},
        {"auction_winners", c.stage.auction_winners},
        {"augmentation_rate", c.stage.augmentation_rate},
        {"augmentation_source",
         augmentation_source_name(c.stage.augmentation_source)},
    };
    j["train"] = {
        {"weights",
         {{"w_ctr", c.train.weights.w_ctr},
          {"w_cqs", c.train.weights.w_cqs},
          {"w_teacher", c.train.weights.w_teacher}}},
        {"optimizer",
         {{"algorithm", optimizer_name(c.train.optimizer.algo)},
          {"lr", c.train.optimizer.lr},
          {"adagrad_eps", c.train.optimizer.adagrad_eps}}},
        {"batch_size", c.train.batch_size},
        {"eval_window", c.train.eval_window},
        {"ablation",
         {{"disable_teacher", c.train.ablation.disable_teacher},
          {"disable_augmentation", c.train.ablation.disable_augmentation},
          {"dedicated_ctr_only", c.train.ablation.dedicated_ctr_only},
          {"dedicated_cqs_only", c.train.ablation.dedicated_cqs_only}}},
    };
    j["student"] = {
        {"embedding_dim", c.student.embedding_dim},
        {"tower_hidden", c.student.tower_hidden},
        {"tower_dim", c.student.tower_dim},
        {"head_hidden", c.student.head_hidden},
    };
    j["final_ctr"] = {
        {"embedding_dim", c.final_ctr.embedding_dim},
        {"hidden", c.final_ctr.hidden},
    };
    j["quality_model"] = {
        {"embedding_dim", c.quality_model.embedding_dim},
        {"hidden", c.quality_model.hidden},
    };
    j["scalars"] = c.scalars.values;
    j["quality_weight"] = c.quality_weight;
    j["phases"] = {
        {"teacher_warmup", c.phases.teacher_warmup},
        {"student_train", c.phases.student_train},
        {"eval", c.phases.eval},
        {"warmup_samples_per_request", c.phases.warmup_samples_per_request},
    };
    j["io"] = {
        {"save_training_log", c.io.save_training_log},
        {"save_eval_records", c.io.save_eval_records},
        {"save_replay_log", c.io.save_replay_log},
    };
    return j;
}

ScenarioConfig scenario_from_json(const ordered_json& j) {
    ScenarioConfig c;
    get_if_present(j, "seed", c.seed);
    if (j.contains("variant"))
        c.variant = variant_from_name(j.at("variant").get<std::string>());
    if (j.contains("world")) {
        const auto& w = j.at("world");
        get_if_present(w, "num_users", c.world.num_users);
        get_if_present(w, "num_ads", c.world.num_ads);
        get_if_present(w, "num_campaigns", c.world.num_campaigns);
        get_if_present(w, "latent_dim", c.world.latent_dim);
        get_if_present(w, "num_quality_events", c.world.num_quality_events);
        get_if_present(w, "ctr_quality_correlation",
                       c.world.ctr_quality_correlation);
        get_if_present(w, "base_ctr_logit", c.world.base_ctr_logit);
        get_if_present(w, "base_quality_logits", c.world.base_quality_logits);
        get_if_present(w, "bid_log_mean", c.world.bid_log_mean);
        get_if_present(w, "bid_log_sd", c.world.bid_log_sd);
        get_if_present(w, "post_impression_fraction",
                       c.world.post_impression_fraction);
        get_if_present(w, "click_logit_scale", c.world.click_logit_scale);
        get_if_present(w, "quality_logit_scale", c.world.quality_logit_scale);
        get_if_present(w, "conversion_propensity_min",
                       c.world.conversion_propensity_min);
        get_if_present(w, "conversion_propensity_max",
                       c.world.conversion_propensity_max);
        get_if_present(w, "projections_per_latent",
                       c.world.projections_per_latent);
        get_if_present(w, "buckets_per_projection",
                       c.world.buckets_per_projection);
        get_if_present(w, "early_feature_fraction",
                       c.world.early_feature_fraction);
    }
    if (j.contains("stage")) {
        const auto& s = j.at("stage");
        get_if_present(s, "retrieval_size", c.stage.retrieval_size);
        get_if_present(s, "early_pass", c.stage.early_pass);
        get_if_present(s, "auction_winners", c.stage.auction_winners);
        get_if_present(s, "augmentation_rate", c.stage.augmentation_rate);
        if (s.contains("augmentation_source"))
            c.stage.augmentation_source = augmentation_source_from_name(
                s.at("augmentation_source").get<std::string>());
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        if (t.contains("weights")) {
            const auto& w = t.at("weights");
            get_if_present(w, "w_ctr", c.train.weights.w_ctr);
            get_if_present(w, "w_cqs", c.train.weights.w_cqs);
            get_if_present(w, "w_teacher", c.train.weights.w_teacher);
        }
        if (t.contains("optimizer")) {
            const auto& o = t.at("optimizer");
            if (o.contains("algorithm"))
                c.train.optimizer.algo =
                    optimizer_from_name(o.at("algorithm").get<std::string>());
            get_if_present(o, "lr", c.train.optimizer.lr);
            get_if_present(o, "adagrad_eps", c.train.optimizer.adagrad_eps);
        }
        get_if_present(t, "batch_size", c.train.batch_size);
        get_if_present(t, "eval_window", c.train.eval_window);
        if (t.contains("ablation")) {
            const auto& a = t.at("ablation");
            get_if_present(a, "disable_teacher",
                           c.train.ablation.disable_teacher);
            get_if_present(a, "disable_augmentation",
                           c.train.ablation.disable_augmentation);
            get_if_present(a, "dedicated_ctr_only",
                           c.train.ablation.dedicated_ctr_only);
            get_if_present(a, "dedicated_cqs_only",
                           c.train.ablation.dedicated_cqs_only);
        }
    }
    if (j.contains("student")) {
        const auto& s = j.at("student");
        get_if_present(s, "embedding_dim", c.student.embedding_dim);
        get_if_present(s, "tower_hidden", c.student.tower_hidden);
        get_if_present(s, "tower_dim", c.student.tower_dim);
        get_if_present(s, "head_hidden", c.student.head_hidden);
    }
    if (j.contains("final_ctr")) {
        const auto& f = j.at("final_ctr");
        get_if_present(f, "embedding_dim", c.final_ctr.embedding_dim);
        get_if_present(f, "hidden", c.final_ctr.hidden);
    }
    if (j.contains("quality_model")) {
        const auto& q = j.at("quality_model");
        get_if_present(q, "embedding_dim", c.quality_model.embedding_dim);
        get_if_present(q, "hidden", c.quality_model.hidden);
    }
    if (j.contains("scalars"))
        c.scalars.values = j.at("scalars").get<std::vector<double>>();
    get_if_present(j, "quality_weight", c.quality_weight);
    if (j.contains("phases")) {
        const auto& p = j.at("phases");
        get_if_present(p, "teacher_warmup", c.phases.teacher_warmup);
        get_if_present(p, "student_train", c.phases.student_train);
        get_if_present(p, "eval", c.phases.eval);
        get_if_present(p, "warmup_samples_per_request",
                       c.phases.warmup_samples_per_request);
    }
    if (j.contains("io")) {
        const auto& io = j.at("io");
        get_if_present(io, "save_training_log", c.io.save_training_log);
        get_if_present(io, "save_eval_records", c.io.save_eval_records);
        get_if_present(io, "save_replay_log", c.io.save_replay_log);
    }
    c.validate();
    return c;
}

void apply_override(ordered_json& config, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like dot.path=value: " + assignment);
    std::string path = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);

    ordered_json* node = &config;
    size_t start = 0;
    while (true) {
        size_t dot = path.find('.', start);
        std::string key = path.substr(start, dot - start);
        if (key.empty()) throw ConfigError("bad override path: " + path);
        if (dot == std::string::npos) {
            ordered_json parsed = ordered_json::parse(value, nullptr, false);
            if (parsed.is_discarded()) parsed = value;  // plain string
            (*node)[key] = parsed;
            return;
        }
        if (!node->contains(key) || !(*node)[key].is_object())
            (*node)[key] = ordered_json::object();
        node = &(*node)[key];
        start = dot + 1;
    }
}

ScenarioConfig load_scenario(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file: " + config_path);
    ordered_json j = ordered_json::parse(in, nullptr, true);
    for (const auto& o : overrides) apply_override(j, o);
    return scenario_from_json(j);
}

ScenarioConfig default_scenario(const std::vector<std::string>& overrides) {
    ordered_json j = scenario_to_json(ScenarioConfig{});
    for (const auto& o : overrides) apply_override(j, o);
    return scenario_from_json(j);
}

}  // namespace adlab
