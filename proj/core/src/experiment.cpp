#include "adlab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <optional>
#include <cmath>
#include <iostream>
#include <sstream>

namespace adlab {

using ordered_json = nlohmann::ordered_json;

namespace {

// derived rng stream tags
constexpr uint64_t kRequestStream = 11;
constexpr uint64_t kWarmupPick = 12;
constexpr uint64_t kOutcomeSalt = 13;
constexpr uint64_t kAugmentSalt = 14;
constexpr uint64_t kStudentInit = 15;
constexpr uint64_t kStudentCqsInit = 16;
constexpr uint64_t kTeacherInit = 17;
constexpr uint64_t kQualityInit = 18;
constexpr uint64_t kBootstrap = 19;

struct PhaseTimer {
    std::string name;
    std::chrono::steady_clock::time_point start;
    explicit PhaseTimer(std::string n)
        : name(std::move(n)), start(std::chrono::steady_clock::now()) {}
    ~PhaseTimer() {
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start)
                      .count();
        std::cerr << "[adlab] " << name << " took " << ms << " ms\n";
    }
};

template <typename Fn>
auto run_phase(const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw NumericError("phase '" + name + "' failed: " + e.what());
    }
}

}  // namespace

TeacherBundle init_teachers(const World& world, const ScenarioConfig& config) {
    TeacherBundle t;
    t.ctr = std::make_unique<FinalCtrModel>(world.schema(), config.final_ctr,
                                            mix_seed(config.seed, kTeacherInit));
    for (size_t m = 0; m < config.world.num_quality_events; ++m)
        t.quality.push_back(std::make_unique<QualityEventModel>(
            m, world.schema(), config.quality_model,
            mix_seed(config.seed, kQualityInit, m)));
    return t;
}

void warm_up_teachers(const World& world, const ScenarioConfig& config,
                      TeacherBundle& teachers) {
    PhaseTimer timer("teacher warm-up (" +
                     std::to_string(config.phases.teacher_warmup) + " requests)");
    const uint64_t outcome_salt = mix_seed(config.seed, kOutcomeSalt);
    const size_t batch = config.train.batch_size;
    size_t fill = 0;
    auto step_all = [&] {
        if (fill == 0) return;
        double inv = 1.0 / static_cast<double>(fill);
        teachers.ctr->params().scale_grads(inv);
        optimizer_step(teachers.ctr->params(), config.train.optimizer);
        teachers.ctr->params().zero_grads();
        for (auto& q : teachers.quality) {
            q->params().scale_grads(inv);
            optimizer_step(q->params(), config.train.optimizer);
            q->params().zero_grads();
        }
        fill = 0;
    };
    std::vector<int32_t> pool;
    for (size_t rid = 0; rid < config.phases.teacher_warmup; ++rid) {
        Rng req_rng(mix_seed(config.seed, kRequestStream, rid));
        RankRequest req = world.sample_request(static_cast<int64_t>(rid),
                                               config.stage.retrieval_size, req_rng);
        // oracle labeling over a uniform sample of the retrieved candidates:
        // no auction selection, so the teachers see unbiased traffic
        Rng pick_rng(mix_seed(config.seed, kWarmupPick, rid));
        pool = req.candidates;
        const size_t k =
            std::min(config.phases.warmup_samples_per_request, pool.size());
        const auto& uf = world.user(req.user_id).features;
        for (size_t i = 0; i < k; ++i) {
            size_t j = i + pick_rng.uniform_index(pool.size() - i);
            std::swap(pool[i], pool[j]);
            const int32_t ad_id = pool[i];
            Rng outcome_rng(mix_seed(outcome_salt, rid, static_cast<uint64_t>(ad_id)));
            GroundTruthOutcome out =
                world.realize_outcomes(req.user_id, ad_id, outcome_rng);
            const auto& af = world.ad(ad_id).features;
            teachers.ctr->train_example(uf, af, out.click ? 1.0 : 0.0);
            for (size_t m = 0; m < teachers.quality.size(); ++m)
                teachers.quality[m]->train_example(
                    uf, af, out.quality_events[m] ? 1.0 : 0.0);
            if (++fill >= batch) step_all();
        }
    }
    step_all();
}

StudentBundle make_students(const World& world, const ScenarioConfig& config,
                            Variant variant) {
    StudentBundle b;
    b.primary = std::make_unique<EarlyTwoTowerModel>(
        world.schema(), config.student, mix_seed(config.seed, kStudentInit));
    b.primary_train = config.train;
    b.stage = config.stage;
    switch (variant) {
        case Variant::kMtlFull:
            break;
        case Variant::kDedicatedCtrPlusCqs:
            b.primary_train.ablation.dedicated_ctr_only = true;
            b.secondary = std::make_unique<EarlyTwoTowerModel>(
                world.schema(), config.student,
                mix_seed(config.seed, kStudentCqsInit));
            b.secondary_train = config.train;
            b.secondary_train.ablation.dedicated_cqs_only = true;
            break;
        case Variant::kMtlNoTeacher:
            b.primary_train.ablation.disable_teacher = true;
            break;
        case Variant::kMtlNoAugmentation:
            b.primary_train.ablation.disable_augmentation = true;
            b.stage.augmentation_rate = 0.0;
            break;
        case Variant::kDedicatedCqsOnly:
            b.primary_train.ablation.dedicated_cqs_only = true;
            break;
        case Variant::kProductionBaseline:
            // the pre-CQS system: CTR-only student, impression-only
            // training, constant quality at serving
            b.primary_train.ablation.dedicated_ctr_only = true;
            b.primary_train.ablation.disable_augmentation = true;
            b.stage.augmentation_rate = 0.0;
            b.constant_quality = true;
            break;
    }
    return b;
}

namespace {

void write_record_line(std::ostream* out, const TrainingRecord& rec) {
    if (out != nullptr) (*out) << record_to_line(rec) << '\n';
}

TrainPhaseSummary train_students(const World& world, const ScenarioConfig& config,
                                 const FinalStageScorers& finals,
                                 StudentBundle& students, Variant variant,
                                 ArtifactWriter* artifacts) {
    PhaseTimer timer(std::string("student training [") + variant_name(variant) +
                     "] (" + std::to_string(config.phases.student_train) +
                     " requests)");
    TrainPhaseSummary summary;
    StudentEarlyScorer scorer(*students.primary, students.secondary.get(),
                              students.constant_quality);
    StreamTrainer primary(*students.primary, students.primary_train);
    std::unique_ptr<StreamTrainer> secondary;
    if (students.secondary)
        secondary = std::make_unique<StreamTrainer>(*students.secondary,
                                                    students.secondary_train);
    const uint64_t outcome_salt = mix_seed(config.seed, kOutcomeSalt);
    const uint64_t augment_salt = mix_seed(config.seed, kAugmentSalt);
    std::ostream* log =
        artifacts != nullptr ? artifacts->training_log(variant) : nullptr;

    const size_t first = config.phases.teacher_warmup;
    const size_t last = first + config.phases.student_train;
    for (size_t rid = first; rid < last; ++rid) {
        Rng req_rng(mix_seed(config.seed, kRequestStream, rid));
        RankRequest req = world.sample_request(static_cast<int64_t>(rid),
                                               config.stage.retrieval_size, req_rng);
        RequestTrace trace =
            run_request(world, req, scorer, finals, students.stage, outcome_salt,
                        augment_salt, summary.cascade);
        for (const TrainingRecord& rec : trace.records) {
            primary.consume(rec);
            if (secondary) secondary->consume(rec);
            write_record_line(log, rec);
        }
    }
    primary.finish();
    if (secondary) secondary->finish();
    summary.primary = primary.counters();
    if (secondary) summary.secondary = secondary->counters();
    summary.telemetry = primary.telemetry();
    if (artifacts != nullptr)
        artifacts->save_telemetry(variant, summary.telemetry);
    return summary;
}

}  // namespace

// Golden-set replay plus the production funnel over fresh requests; the
// funnel always runs the base stage config so record distributions stay
// comparable across variants.

EvalPhaseResult run_eval_phase(const World& world,
                               const FinalStageScorers& finals,
                               const EarlyScorer& scorer,
                               const EarlyTwoTowerModel* heads_model,
                               const ScenarioConfig& config, Variant variant,
                               ArtifactWriter* artifacts) {
    PhaseTimer timer(std::string("eval [") + variant_name(variant) + "] (" +
                     std::to_string(config.phases.eval) + " requests)");
    EvalPhaseResult result;
    const uint64_t outcome_salt = mix_seed(config.seed, kOutcomeSalt);
    const uint64_t augment_salt = mix_seed(config.seed, kAugmentSalt);
    const size_t first = config.phases.teacher_warmup + config.phases.student_train;
    const size_t last = first + config.phases.eval;
    const size_t K = config.stage.auction_winners;

    std::ostream* replay =
        artifacts != nullptr ? artifacts->replay_log(variant) : nullptr;
    std::ostream* record_log =
        artifacts != nullptr ? artifacts->eval_records_log(variant) : nullptr;

    std::vector<TrainingRecord> held_out;
    std::vector<double> teacher_preds;
    std::vector<uint8_t> teacher_labels;
    double tvd_num = 0.0, tvd_den = 0.0;
    CascadeCounters counters;
    std::vector<EarlyTwoTowerModel::ServingScores> early_scores;
    std::vector<ScoredAd> all_final;
    ScorerScratch scratch;

    for (size_t rid = first; rid < last; ++rid) {
        Rng req_rng(mix_seed(config.seed, kRequestStream, rid));
        RankRequest req = world.sample_request(static_cast<int64_t>(rid),
                                               config.stage.retrieval_size, req_rng);
        const size_t n = req.candidates.size();

        // replay flow: final-stage scores for every retrieved candidate
        FinalStageScorers::UserContext ctx;
        finals.prepare_user(world.user(req.user_id), ctx);
        all_final.clear();
        finals.score_batch(ctx, world, req.candidates, scratch, all_final);
        GoldenSet golden =
            build_golden_set(req.request_id, all_final, std::min(K, n));

        // the early model's own top K out of the same retrieved set
        scorer.score(world, req, early_scores);
        std::vector<double> tv_early(n);
        for (size_t i = 0; i < n; ++i)
            tv_early[i] = total_value(all_final[i].bid, early_scores[i].y_ctr,
                                      early_scores[i].y_cqs,
                                      finals.quality_weight());
        std::vector<size_t> picks =
            top_k_by_value(tv_early, req.candidates, std::min(K, n));
        std::vector<int32_t> model_topk;
        std::vector<double> model_pick_tvs;  // FINAL-stage values of the picks
        for (size_t i : picks) {
            model_topk.push_back(req.candidates[i]);
            model_pick_tvs.push_back(all_final[i].total_value);
        }

        double hard = hard_recall(model_topk, golden);
        std::optional<double> soft = soft_recall(model_pick_tvs, golden);
        result.raw.add_defined("hard_recall", hard);
        result.raw.add("soft_recall", soft);

        // production funnel on the same request
        RequestTrace trace =
            run_request(world, req, scorer, finals, config.stage, outcome_salt,
                        augment_salt, counters, &early_scores);
        std::optional<double> tvd = total_value_divergence(trace.final_candidates);
        result.raw.add("tvd", tvd);
        for (const FinalCandidate& fc : trace.final_candidates) {
            tvd_num += std::abs(fc.tv_final - fc.tv_early);
            tvd_den += std::abs(fc.tv_final);
        }

        size_t clicks = 0, xouts = 0;
        double conv = 0.0, tv_sum = 0.0;
        for (const AuctionWinner& w : trace.outcome.winners) {
            clicks += w.outcome.click ? 1 : 0;
            xouts += (!w.outcome.quality_events.empty() &&
                      w.outcome.quality_events[0])
                         ? 1
                         : 0;
            if (w.outcome.click)
                conv += world.campaign(w.campaign_id).conversion_propensity;
            tv_sum += w.scored.total_value;
        }
        const double n_win = static_cast<double>(trace.outcome.winners.size());
        if (!trace.outcome.winners.empty()) {
            result.raw.add_defined("ctr", static_cast<double>(clicks) / n_win);
            result.raw.add_defined("xout_rate",
                                   static_cast<double>(xouts) / n_win);
            result.raw.add_defined("cvr_proxy", conv / n_win);
            result.raw.add_defined("impression_total_value", tv_sum / n_win);
        }

        for (const TrainingRecord& rec : trace.records) {
            if (rec.impressed && rec.ctr_traffic) {
                teacher_preds.push_back(rec.teacher_ectr);
                teacher_labels.push_back(rec.click_label ? 1 : 0);
            }
            write_record_line(record_log, rec);
            held_out.push_back(rec);
        }

        if (replay != nullptr) {
            ordered_json row;
            row["request_id"] = req.request_id;
            row["user_id"] = req.user_id;
            row["golden"] = golden.ad_ids;
            row["golden_total_value"] = golden.sum_total_value;
            row["model_topk"] = model_topk;
            row["hard_recall"] = hard;
            if (soft.has_value())
                row["soft_recall"] = *soft;
            else
                row["soft_recall"] = nullptr;
            if (tvd.has_value())
                row["tvd"] = *tvd;
            else
                row["tvd"] = nullptr;
            std::vector<int32_t> winner_ids;
            for (const auto& w : trace.outcome.winners)
                winner_ids.push_back(w.scored.ad_id);
            row["winners"] = winner_ids;
            row["clicks"] = clicks;
            row["xouts"] = xouts;
            (*replay) << row.dump() << '\n';
        }
    }

    result.metrics = result.raw.aggregate(
        mix_seed(config.seed, kBootstrap, static_cast<uint64_t>(variant)));
    result.metrics.pooled_metrics["tvd_pooled"] =
        tvd_den > 0.0 ? tvd_num / tvd_den
                      : std::numeric_limits<double>::quiet_NaN();
    auto ne_t = normalized_entropy(teacher_preds, teacher_labels);
    auto auc_t = auc(teacher_preds, teacher_labels);
    result.metrics.pooled_metrics["ne_teacher"] =
        ne_t.value_or(std::numeric_limits<double>::quiet_NaN());
    result.metrics.pooled_metrics["auc_teacher"] =
        auc_t.value_or(std::numeric_limits<double>::quiet_NaN());
    result.metrics.pooled_metrics["eval_records"] =
        static_cast<double>(held_out.size());

    if (heads_model != nullptr && !held_out.empty()) {
        result.heads =
            evaluate_heads(*heads_model, held_out, config.scalars.total());
        auto& pooled = result.metrics.pooled_metrics;
        pooled["ne_ctr"] =
            result.heads.ne_ctr.value_or(std::numeric_limits<double>::quiet_NaN());
        pooled["auc_ctr"] =
            result.heads.auc_ctr.value_or(std::numeric_limits<double>::quiet_NaN());
        pooled["mse_cqs"] = result.heads.mse_cqs;
        pooled["mean_y_ctr"] = result.heads.mean_y_ctr;
        pooled["empirical_ctr"] = result.heads.empirical_ctr;
        pooled["mean_abs_ctr_teacher_gap"] =
            result.heads.mean_abs_ctr_teacher_gap;
        pooled["cqs_out_of_range_frac"] = result.heads.cqs_out_of_range_frac;
    }
    return result;
}

namespace {

VariantResult run_variant(const World& world, const FinalStageScorers& finals,
                          const ScenarioConfig& config, Variant variant,
                          ArtifactWriter* artifacts) {
    VariantResult result;
    result.variant = variant;
    StudentBundle students = make_students(world, config, variant);
    result.train = run_phase("student_train", [&] {
        return train_students(world, config, finals, students, variant, artifacts);
    });
    if (artifacts != nullptr) artifacts->save_students(variant, students);
    StudentEarlyScorer scorer(*students.primary, students.secondary.get(),
                              students.constant_quality);
    EvalPhaseResult eval = run_phase("eval", [&] {
        return run_eval_phase(world, finals, scorer, students.primary.get(),
                              config, variant, artifacts);
    });
    result.metrics = std::move(eval.metrics);
    result.heads = eval.heads;
    return result;
}

}  // namespace

const VariantResult* RunReport::find(Variant v) const {
    for (const auto& r : results)
        if (r.variant == v) return &r;
    return nullptr;
}

RunReport run_scenario(const ScenarioConfig& config, ArtifactWriter* artifacts) {
    config.validate();
    World world = run_phase("generate_world", [&] {
        return World::generate(config.resolved_world());
    });
    if (artifacts != nullptr) artifacts->save_world(world);
    TeacherBundle teachers = init_teachers(world, config);
    run_phase("teacher_warmup", [&] {
        warm_up_teachers(world, config, teachers);
        return 0;
    });
    if (artifacts != nullptr) artifacts->save_teachers(teachers);
    FinalStageScorers finals(*teachers.ctr, teachers.quality, world,
                             config.scalars, config.quality_weight);
    RunReport report;
    report.config_echo = scenario_to_json(config);
    report.results.push_back(
        run_variant(world, finals, config, config.variant, artifacts));
    if (artifacts != nullptr) artifacts->save_report(report);
    return report;
}

RunReport run_ablation_matrix(const ScenarioConfig& config,
                              ArtifactWriter* artifacts) {
    config.validate();
    World world = World::generate(config.resolved_world());
    if (artifacts != nullptr) artifacts->save_world(world);
    TeacherBundle teachers = init_teachers(world, config);
    warm_up_teachers(world, config, teachers);
    if (artifacts != nullptr) artifacts->save_teachers(teachers);
    FinalStageScorers finals(*teachers.ctr, teachers.quality, world,
                             config.scalars, config.quality_weight);
    RunReport report;
    report.config_echo = scenario_to_json(config);
    for (Variant v : ablation_matrix_variants())
        report.results.push_back(run_variant(world, finals, config, v, artifacts));
    if (artifacts != nullptr) artifacts->save_report(report);
    return report;
}

std::vector<RunReport> run_sweep(const ordered_json& base_config,
                                 const std::string& dot_path,
                                 const std::vector<std::string>& values,
                                 const std::filesystem::path* out_root) {
    std::vector<RunReport> reports;
    for (const std::string& value : values) {
        ordered_json j = base_config;
        apply_override(j, dot_path + "=" + value);
        ScenarioConfig config = scenario_from_json(j);
        std::unique_ptr<ArtifactWriter> writer;
        if (out_root != nullptr)
            writer = std::make_unique<ArtifactWriter>(
                *out_root / (dot_path + "=" + value), config);
        reports.push_back(run_scenario(config, writer.get()));
    }
    return reports;
}

RunReport replay_eval(const std::filesystem::path& run_dir,
                      ArtifactWriter* artifacts) {
    std::ifstream report_in(run_dir / "report.json");
    if (!report_in)
        throw ConfigError("no report.json under " + run_dir.string());
    ordered_json saved = ordered_json::parse(report_in);
    ScenarioConfig config = scenario_from_json(saved.at("config"));

    std::ifstream world_in(run_dir / "checkpoint" / "world.txt");
    if (!world_in)
        throw ConfigError("no world checkpoint under " + run_dir.string());
    World world = World::load(world_in);

    TeacherBundle teachers = init_teachers(world, config);
    load_params(teachers.ctr->params(),
                (run_dir / "checkpoint" / "teacher_ctr.params").string());
    for (size_t m = 0; m < teachers.quality.size(); ++m)
        load_params(teachers.quality[m]->params(),
                    (run_dir / "checkpoint" /
                     ("quality_" + std::to_string(m) + ".params"))
                        .string());
    FinalStageScorers finals(*teachers.ctr, teachers.quality, world,
                             config.scalars, config.quality_weight);

    RunReport report;
    report.config_echo = saved.at("config");
    for (const auto& saved_result : saved.at("results")) {
        Variant v = variant_from_name(saved_result.at("variant"));
        StudentBundle students = make_students(world, config, v);
        load_params(students.primary->params(),
                    (run_dir / "checkpoint" /
                     (std::string("student_") + variant_name(v) + ".params"))
                        .string());
        if (students.secondary)
            load_params(students.secondary->params(),
                        (run_dir / "checkpoint" /
                         (std::string("student_cqs_") + variant_name(v) +
                          ".params"))
                            .string());
        StudentEarlyScorer scorer(*students.primary, students.secondary.get(),
                                  students.constant_quality);
        EvalPhaseResult eval = run_eval_phase(
            world, finals, scorer, students.primary.get(), config, v, artifacts);
        VariantResult result;
        result.variant = v;
        result.metrics = std::move(eval.metrics);
        result.heads = eval.heads;
        report.results.push_back(std::move(result));
    }
    if (artifacts != nullptr) artifacts->save_report(report);
    return report;
}

ArtifactWriter::ArtifactWriter(std::filesystem::path root,
                               const ScenarioConfig& config)
    : root_(std::move(root)), io_(config.io) {
    std::filesystem::create_directories(root_ / "checkpoint");
    std::filesystem::create_directories(root_ / "logs");
}

void ArtifactWriter::save_world(const World& world) {
    std::ofstream out(root_ / "checkpoint" / "world.txt");
    world.save(out);
}

void ArtifactWriter::save_teachers(const TeacherBundle& teachers) {
    save_params(teachers.ctr->params(),
                (root_ / "checkpoint" / "teacher_ctr.params").string());
    for (size_t m = 0; m < teachers.quality.size(); ++m)
        save_params(teachers.quality[m]->params(),
                    (root_ / "checkpoint" /
                     ("quality_" + std::to_string(m) + ".params"))
                        .string());
}

void ArtifactWriter::save_students(Variant variant,
                                   const StudentBundle& students) {
    save_params(students.primary->params(),
                (root_ / "checkpoint" /
                 (std::string("student_") + variant_name(variant) + ".params"))
                    .string());
    if (students.secondary)
        save_params(students.secondary->params(),
                    (root_ / "checkpoint" /
                     (std::string("student_cqs_") + variant_name(variant) +
                      ".params"))
                        .string());
}

void ArtifactWriter::save_telemetry(Variant variant,
                                    const std::vector<WindowTelemetry>& tel) {
    std::ofstream out(root_ / "logs" /
                      (std::string("telemetry_") + variant_name(variant) +
                       ".jsonl"));
    for (const auto& t : tel) {
        ordered_json row;
        row["window"] = t.window_index;
        row["records"] = t.record_count;
        row["mean_total_loss"] = t.mean_total_loss;
        row["mean_ctr_loss"] = t.mean_ctr_loss;
        row["mean_cqs_loss"] = t.mean_cqs_loss;
        row["mean_teacher_loss"] = t.mean_teacher_loss;
        if (t.ne_ctr.has_value())
            row["ne_ctr"] = *t.ne_ctr;
        else
            row["ne_ctr"] = nullptr;
        if (t.auc_ctr.has_value())
            row["auc_ctr"] = *t.auc_ctr;
        else
            row["auc_ctr"] = nullptr;
        row["mse_cqs"] = t.mse_cqs;
        row["ctr_label_count"] = t.ctr_label_count;
        out << row.dump() << '\n';
    }
}

std::ostream* ArtifactWriter::open_log(const std::string& name) {
    auto it = streams_.find(name);
    if (it != streams_.end()) return it->second.get();
    auto stream = std::make_unique<std::ofstream>(root_ / "logs" / name);
    std::ostream* raw = stream.get();
    streams_[name] = std::move(stream);
    return raw;
}

std::ostream* ArtifactWriter::training_log(Variant variant) {
    if (!io_.save_training_log) return nullptr;
    return open_log(std::string("train_") + variant_name(variant) + ".jsonl");
}

std::ostream* ArtifactWriter::eval_records_log(Variant variant) {
    if (!io_.save_eval_records) return nullptr;
    return open_log(std::string("eval_records_") + variant_name(variant) +
                    ".jsonl");
}

std::ostream* ArtifactWriter::replay_log(Variant variant) {
    if (!io_.save_replay_log) return nullptr;
    return open_log(std::string("replay_") + variant_name(variant) + ".jsonl");
}

void ArtifactWriter::save_report(const RunReport& report) {
    {
        std::ofstream out(root_ / "report.json");
        out << report_to_json(report).dump(2) << '\n';
    }
    {
        std::ofstream out(root_ / "report.csv");
        out << report_to_csv(report);
    }
    {
        std::ofstream out(root_ / "report.md");
        out << report_to_markdown(report);
    }
}

namespace {

ordered_json summary_to_json(const MetricSummary& s) {
    return {{"mean", s.mean},     {"sd", s.sd},
            {"ci_lo", s.ci_lo},   {"ci_hi", s.ci_hi},
            {"count", s.count},   {"undefined", s.undefined_count}};
}

ordered_json nullable(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

// paper-style relative changes, sign-marked for the better direction
struct DeltaSpec {
    const char* key;
    bool pooled;
    bool higher_is_better;
};

constexpr DeltaSpec kDeltaSpecs[] = {
    {"soft_recall", false, true}, {"hard_recall", false, true},
    {"ne_ctr", true, false},      {"mse_cqs", true, false},
    {"tvd", false, false},        {"xout_rate", false, false},
    {"ctr", false, true},         {"cvr_proxy", false, true},
    {"impression_total_value", false, true},
};

double metric_value(const VariantResult& r, const DeltaSpec& spec) {
    if (spec.pooled) {
        auto it = r.metrics.pooled_metrics.find(spec.key);
        return it == r.metrics.pooled_metrics.end()
                   ? std::numeric_limits<double>::quiet_NaN()
                   : it->second;
    }
    auto it = r.metrics.request_metrics.find(spec.key);
    return it == r.metrics.request_metrics.end()
               ? std::numeric_limits<double>::quiet_NaN()
               : it->second.mean;
}

}  // namespace

ordered_json report_to_json(const RunReport& report) {
    ordered_json j;
    j["adlab_report"] = 1;
    j["config"] = report.config_echo;
    j["results"] = ordered_json::array();
    for (const auto& r : report.results) {
        ordered_json res;
        res["variant"] = variant_name(r.variant);
        ordered_json metrics;
        for (const auto& [name, s] : r.metrics.request_metrics)
            metrics[name] = summary_to_json(s);
        res["request_metrics"] = metrics;
        ordered_json pooled;
        for (const auto& [name, v] : r.metrics.pooled_metrics)
            pooled[name] = nullable(v);
        res["pooled"] = pooled;
        ordered_json train;
        train["requests"] = r.train.cascade.requests;
        train["skipped_empty"] = r.train.cascade.skipped_empty;
        train["impressions"] = r.train.cascade.impressions;
        train["augmented_logged"] = r.train.cascade.augmented;
        train["early_rescored"] = r.train.cascade.early_rescored;
        train["records_consumed"] = r.train.primary.consumed;
        train["augmented_consumed"] = r.train.primary.augmented_consumed;
        train["augmented_skipped"] = r.train.primary.augmented_skipped;
        train["updates"] = r.train.primary.updates;
        train["telemetry_windows"] = r.train.telemetry.size();
        if (!r.train.telemetry.empty()) {
            const auto& t = r.train.telemetry.back();
            ordered_json tail;
            tail["window"] = t.window_index;
            tail["mean_total_loss"] = t.mean_total_loss;
            tail["ne_ctr"] =
                t.ne_ctr.has_value() ? ordered_json(*t.ne_ctr) : ordered_json();
            tail["mse_cqs"] = t.mse_cqs;
            train["last_window"] = tail;
        }
        res["train"] = train;
        j["results"].push_back(res);
    }
    const VariantResult* base = report.find(Variant::kMtlFull);
    if (base != nullptr && report.results.size() > 1) {
        ordered_json deltas = ordered_json::array();
        for (const auto& r : report.results) {
            if (r.variant == Variant::kMtlFull) continue;
            ordered_json row;
            row["variant"] = variant_name(r.variant);
            for (const auto& spec : kDeltaSpecs) {
                double b = metric_value(*base, spec);
                double v = metric_value(r, spec);
                if (std::isnan(b) || std::isnan(v) || b == 0.0) {
                    row[spec.key] = nullptr;
                    continue;
                }
                row[spec.key] = 100.0 * (v - b) / std::abs(b);
            }
            deltas.push_back(row);
        }
        j["deltas_vs_mtl_full_pct"] = deltas;
    }
    return j;
}

std::string report_to_csv(const RunReport& report) {
    std::ostringstream out;
    out << "variant,section,metric,mean,sd,ci_lo,ci_hi,count,undefined\n";
    auto num = [](double v) {
        std::ostringstream s;
        s.precision(17);
        if (std::isnan(v))
            s << "";
        else
            s << v;
        return s.str();
    };
    for (const auto& r : report.results) {
        for (const auto& [name, s] : r.metrics.request_metrics)
            out << variant_name(r.variant) << ",request," << name << ','
                << num(s.mean) << ',' << num(s.sd) << ',' << num(s.ci_lo) << ','
                << num(s.ci_hi) << ',' << s.count << ',' << s.undefined_count
                << '\n';
        for (const auto& [name, v] : r.metrics.pooled_metrics)
            out << variant_name(r.variant) << ",pooled," << name << ','
                << num(v) << ",,,,,\n";
    }
    return out.str();
}

std::string report_to_markdown(const RunReport& report) {
    std::ostringstream out;
    out << "# adlab run report\n\n";
    auto fmt = [](double v) {
        if (std::isnan(v)) return std::string("-");
        std::ostringstream s;
        s.precision(6);
        s << v;
        return s.str();
    };

    out << "## Request-level metrics (mean, [95% CI], sd)\n\n";
    out << "| metric |";
    for (const auto& r : report.results) out << ' ' << variant_name(r.variant) << " |";
    out << "\n|---|";
    for (size_t i = 0; i < report.results.size(); ++i) out << "---|";
    out << '\n';
    std::vector<std::string> keys;
    if (!report.results.empty())
        for (const auto& [name, s] : report.results.front().metrics.request_metrics)
            keys.push_back(name);
    for (const auto& key : keys) {
        out << "| " << key << " |";
        for (const auto& r : report.results) {
            const auto& s = r.metrics.request_metrics.at(key);
            out << ' ' << fmt(s.mean) << " [" << fmt(s.ci_lo) << ", "
                << fmt(s.ci_hi) << "] sd=" << fmt(s.sd) << " |";
        }
        out << '\n';
    }

    out << "\n## Pooled metrics\n\n";
    out << "| metric |";
    for (const auto& r : report.results) out << ' ' << variant_name(r.variant) << " |";
    out << "\n|---|";
    for (size_t i = 0; i < report.results.size(); ++i) out << "---|";
    out << '\n';
    std::vector<std::string> pooled_keys;
    if (!report.results.empty())
        for (const auto& [name, v] : report.results.front().metrics.pooled_metrics)
            pooled_keys.push_back(name);
    for (const auto& key : pooled_keys) {
        out << "| " << key << " |";
        for (const auto& r : report.results) {
            auto it = r.metrics.pooled_metrics.find(key);
            out << ' '
                << fmt(it == r.metrics.pooled_metrics.end()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : it->second)
                << " |";
        }
        out << '\n';
    }

    const VariantResult* base = report.find(Variant::kMtlFull);
    if (base != nullptr && report.results.size() > 1) {
        out << "\n## Relative change vs mtl_full\n\n";
        out << "(+) means better performance with higher values, (-) means "
               "better performance with lower values.\n\n";
        out << "| metric |";
        for (const auto& r : report.results) {
            if (r.variant == Variant::kMtlFull) continue;
            out << ' ' << variant_name(r.variant) << " |";
        }
        out << "\n|---|";
        for (size_t i = 0; i + 1 < report.results.size(); ++i) out << "---|";
        out << '\n';
        for (const auto& spec : kDeltaSpecs) {
            out << "| " << spec.key << " ("
                << (spec.higher_is_better ? "+" : "-") << ") |";
            for (const auto& r : report.results) {
                if (r.variant == Variant::kMtlFull) continue;
                double b = metric_value(*base, spec);
                double v = metric_value(r, spec);
                if (std::isnan(b) || std::isnan(v) || b == 0.0) {
                    out << " - |";
                    continue;
                }
                double pct = 100.0 * (v - b) / std::abs(b);
                std::ostringstream s;
                s.precision(3);
                s << (pct >= 0 ? "+" : "") << pct << "%";
                out << ' ' << s.str() << " |";
            }
            out << '\n';
        }
    }
    return out.str();
}

std::string sweep_to_csv(const std::string& dot_path,
                         const std::vector<std::string>& values,
                         const std::vector<RunReport>& reports) {
    std::ostringstream out;
    out << dot_path
        << ",soft_recall,hard_recall,tvd,ne_ctr,auc_ctr,mse_cqs,xout_rate,"
           "impression_total_value\n";
    auto num = [](double v) {
        std::ostringstream s;
        s.precision(10);
        if (std::isnan(v))
            s << "";
        else
            s << v;
        return s.str();
    };
    for (size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i].results.front();
        auto req = [&](const char* key) {
            auto it = r.metrics.request_metrics.find(key);
            return it == r.metrics.request_metrics.end()
                       ? std::numeric_limits<double>::quiet_NaN()
                       : it->second.mean;
        };
        auto pooled = [&](const char* key) {
            auto it = r.metrics.pooled_metrics.find(key);
            return it == r.metrics.pooled_metrics.end()
                       ? std::numeric_limits<double>::quiet_NaN()
                       : it->second;
        };
        out << values[i] << ',' << num(req("soft_recall")) << ','
            << num(req("hard_recall")) << ',' << num(req("tvd")) << ','
            << num(pooled("ne_ctr")) << ',' << num(pooled("auc_ctr")) << ','
            << num(pooled("mse_cqs")) << ',' << num(req("xout_rate")) << ','
            << num(req("impression_total_value")) << '\n';
    }
    return out.str();
}

}  // namespace adlab
