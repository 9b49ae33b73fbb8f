#pragma once

#include <optional>
#include <span>
#include <vector>

#include "adlab/cascade.hpp"
#include "adlab/nn.hpp"
#include "adlab/rankers.hpp"

namespace adlab {

struct TaskWeights {
    double w_ctr = 1.0;
    double w_cqs = 1.5;
    double w_teacher = 2.0;

    void validate() const;
};

struct AblationFlags {
    bool disable_teacher = false;
    bool disable_augmentation = false;
    bool dedicated_ctr_only = false;
    bool dedicated_cqs_only = false;
};

struct TrainConfig {
    TaskWeights weights;
    OptimizerConfig optimizer;
    size_t batch_size = 64;
    size_t eval_window = 10000;  // records between telemetry snapshots
    AblationFlags ablation;

    // weights with the ablation flags applied (dedicated modes force the
    // other tasks to 0; disable_teacher forces w_teacher to 0)
    TaskWeights effective_weights() const;
    void validate() const;
};

struct TaskLosses {
    double ctr = 0.0;      // unweighted per-task losses
    double cqs = 0.0;
    double teacher = 0.0;
    double total = 0.0;    // weighted sum
    bool ctr_active = false;
    bool teacher_active = false;
};

struct RecordLossResult {
    TaskLosses losses;
    // upstream gradients for the three heads, task weights applied
    double d_yctr = 0.0;
    double d_ycqs = 0.0;
    double d_yteacher = 0.0;
};

// The consolidated multi-task loss for one record:
//   L_ctr     hard-label CE on impressed ctr-traffic records,
//             pseudo-label CE (teacher eCTR) on augmented ctr-traffic records
//   L_cqs     MSE against the logged final-stage CQS, every record
//   L_teacher pseudo-label CE through the teacher head, ctr-traffic records
RecordLossResult record_loss(const EarlyTwoTowerModel::Outputs& outputs,
                             const TrainingRecord& record,
                             const TaskWeights& weights);

struct WindowTelemetry {
    size_t window_index = 0;
    size_t record_count = 0;
    double mean_total_loss = 0.0;
    double mean_ctr_loss = 0.0;      // over ctr-active records
    double mean_cqs_loss = 0.0;
    double mean_teacher_loss = 0.0;  // over teacher-active records
    std::optional<double> ne_ctr;    // progressive, impressed ctr-traffic records
    std::optional<double> auc_ctr;
    double mse_cqs = 0.0;
    size_t ctr_label_count = 0;
};

// Single-pass mini-batched trainer over a record stream. Predictions for
// window telemetry are taken before the record's own update (progressive
// validation).
class StreamTrainer {
public:
    StreamTrainer(EarlyTwoTowerModel& model, const TrainConfig& config);

    void consume(const TrainingRecord& record);
    // flush the partial batch and window
    void finish();

    const std::vector<WindowTelemetry>& telemetry() const { return telemetry_; }

    struct Counters {
        size_t consumed = 0;
        size_t augmented_consumed = 0;
        size_t augmented_skipped = 0;
        size_t updates = 0;
    };
    const Counters& counters() const { return counters_; }

private:
    EarlyTwoTowerModel* model_;
    TrainConfig config_;
    TaskWeights weights_;
    size_t batch_fill_ = 0;
    Counters counters_;

    // window accumulation
    std::vector<WindowTelemetry> telemetry_;
    size_t window_records_ = 0;
    double sum_total_ = 0.0, sum_ctr_ = 0.0, sum_cqs_ = 0.0, sum_teacher_ = 0.0;
    size_t ctr_active_ = 0, teacher_active_ = 0;
    std::vector<double> window_ctr_preds_;
    std::vector<uint8_t> window_ctr_labels_;
    std::vector<double> window_cqs_preds_;
    std::vector<double> window_cqs_labels_;

    void apply_update();
    void flush_window();
};

struct HeadEvalMetrics {
    size_t record_count = 0;
    size_t ctr_record_count = 0;  // impressed && ctr_traffic
    std::optional<double> ne_ctr;
    std::optional<double> auc_ctr;
    double mse_cqs = 0.0;
    double mean_y_ctr = 0.0;       // over impressed ctr-traffic records
    double empirical_ctr = 0.0;    // same records
    double mean_abs_ctr_teacher_gap = 0.0;  // |y_ctr - eCTR| over all records
    double cqs_out_of_range_frac = 0.0;     // y_cqs outside [0, sum of scalars]
};

// Frozen-model evaluation on held-out records (disjoint from training).
HeadEvalMetrics evaluate_heads(const EarlyTwoTowerModel& model,
                               std::span<const TrainingRecord> records,
                               double cqs_upper_bound);

}  // namespace adlab
