#include "adlab/training.hpp"

#include <cmath>

#include "adlab/losses.hpp"
#include "adlab/metrics.hpp"

namespace adlab {

void TaskWeights::validate() const {
    if (w_ctr < 0.0 || w_cqs < 0.0 || w_teacher < 0.0)
        throw ConfigError("task weights must be >= 0");
}

TaskWeights TrainConfig::effective_weights() const {
    TaskWeights w = weights;
    if (ablation.dedicated_ctr_only) {
        w.w_cqs = 0.0;
        w.w_teacher = 0.0;
    }
    if (ablation.dedicated_cqs_only) {
        w.w_ctr = 0.0;
        w.w_teacher = 0.0;
    }
    if (ablation.disable_teacher) w.w_teacher = 0.0;
    return w;
}

void TrainConfig::validate() const {
    weights.validate();
    if (ablation.dedicated_ctr_only && ablation.dedicated_cqs_only)
        throw ConfigError("dedicated_ctr_only and dedicated_cqs_only conflict");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (eval_window < 1) throw ConfigError("eval_window must be >= 1");
    if (optimizer.lr <= 0.0) throw ConfigError("optimizer lr must be > 0");
}

RecordLossResult record_loss(const EarlyTwoTowerModel::Outputs& outputs,
                             const TrainingRecord& record,
                             const TaskWeights& weights) {
    if (!std::isfinite(record.final_cqs))
        throw DataError("record_loss: record lacks a finite final_cqs");
    RecordLossResult r;

    if (record.ctr_traffic) {
        if (record.impressed) {
            LossGrad lg = binary_ce_loss(outputs.y_ctr,
                                         record.click_label ? 1.0 : 0.0);
            r.losses.ctr = lg.loss;
            r.d_yctr = weights.w_ctr * lg.grad;
            r.losses.ctr_active = true;
        } else if (record.augmented) {
            LossGrad lg = soft_label_ce_loss(outputs.y_ctr, record.teacher_ectr);
            r.losses.ctr = lg.loss;
            r.d_yctr = weights.w_ctr * lg.grad;
            r.losses.ctr_active = true;
        }
    }

    LossGrad cqs = mse_loss(outputs.y_cqs, record.final_cqs);
    r.losses.cqs = cqs.loss;
    r.d_ycqs = weights.w_cqs * cqs.grad;

    if (record.ctr_traffic) {
        LossGrad lg = soft_label_ce_loss(outputs.y_teacher, record.teacher_ectr);
        r.losses.teacher = lg.loss;
        r.d_yteacher = weights.w_teacher * lg.grad;
        r.losses.teacher_active = true;
    }

    r.losses.total = weights.w_ctr * (r.losses.ctr_active ? r.losses.ctr : 0.0) +
                     weights.w_cqs * r.losses.cqs +
                     weights.w_teacher *
                         (r.losses.teacher_active ? r.losses.teacher : 0.0);
    // zero-weight tasks contribute exactly nothing
    if (weights.w_ctr == 0.0) r.d_yctr = 0.0;
    if (weights.w_cqs == 0.0) r.d_ycqs = 0.0;
    if (weights.w_teacher == 0.0) r.d_yteacher = 0.0;
    return r;
}

StreamTrainer::StreamTrainer(EarlyTwoTowerModel& model, const TrainConfig& config)
    : model_(&model), config_(config), weights_(config.effective_weights()) {
    config_.validate();
}

void StreamTrainer::consume(const TrainingRecord& record) {
    if (record.augmented && config_.ablation.disable_augmentation) {
        counters_.augmented_skipped += 1;
        return;
    }
    EarlyTwoTowerModel::Outputs outputs =
        model_->forward_train(record.user_features, record.ad_features);
    RecordLossResult rl = record_loss(outputs, record, weights_);
    if (std::isnan(rl.losses.total))
        throw NumericError("NaN training loss at window " +
                           std::to_string(telemetry_.size()) + ", request " +
                           std::to_string(record.request_id));
    model_->backward_train(rl.d_yctr, rl.d_ycqs, rl.d_yteacher);
    counters_.consumed += 1;
    if (record.augmented) counters_.augmented_consumed += 1;
    batch_fill_ += 1;
    if (batch_fill_ >= config_.batch_size) apply_update();

    // progressive window stats (predictions were made before this record's
    // batch could update the model)
    window_records_ += 1;
    sum_total_ += rl.losses.total;
    sum_cqs_ += rl.losses.cqs;
    if (rl.losses.ctr_active) {
        sum_ctr_ += rl.losses.ctr;
        ctr_active_ += 1;
    }
    if (rl.losses.teacher_active) {
        sum_teacher_ += rl.losses.teacher;
        teacher_active_ += 1;
    }
    if (record.impressed && record.ctr_traffic) {
        window_ctr_preds_.push_back(outputs.y_ctr);
        window_ctr_labels_.push_back(record.click_label ? 1 : 0);
    }
    window_cqs_preds_.push_back(outputs.y_cqs);
    window_cqs_labels_.push_back(record.final_cqs);
    if (window_records_ >= config_.eval_window) flush_window();
}

void StreamTrainer::apply_update() {
    if (batch_fill_ == 0) return;
    model_->params().scale_grads(1.0 / static_cast<double>(batch_fill_));
    optimizer_step(model_->params(), config_.optimizer);
    model_->params().zero_grads();
    batch_fill_ = 0;
    counters_.updates += 1;
}

void StreamTrainer::flush_window() {
    if (window_records_ == 0) return;
    WindowTelemetry t;
    t.window_index = telemetry_.size();
    t.record_count = window_records_;
    t.mean_total_loss = sum_total_ / static_cast<double>(window_records_);
    t.mean_ctr_loss =
        ctr_active_ > 0 ? sum_ctr_ / static_cast<double>(ctr_active_) : 0.0;
    t.mean_cqs_loss = sum_cqs_ / static_cast<double>(window_records_);
    t.mean_teacher_loss =
        teacher_active_ > 0 ? sum_teacher_ / static_cast<double>(teacher_active_)
                            : 0.0;
    t.ctr_label_count = window_ctr_labels_.size();
    if (!window_ctr_labels_.empty()) {
        t.ne_ctr = normalized_entropy(window_ctr_preds_, window_ctr_labels_);
        t.auc_ctr = auc(window_ctr_preds_, window_ctr_labels_);
    }
    t.mse_cqs = window_cqs_preds_.empty()
                    ? 0.0
                    : mean_squared_error(window_cqs_preds_, window_cqs_labels_);
    telemetry_.push_back(t);
    window_records_ = 0;
    sum_total_ = sum_ctr_ = sum_cqs_ = sum_teacher_ = 0.0;
    ctr_active_ = teacher_active_ = 0;
    window_ctr_preds_.clear();
    window_ctr_labels_.clear();
    window_cqs_preds_.clear();
    window_cqs_labels_.clear();
}

void StreamTrainer::finish() {
    apply_update();
    flush_window();
}

HeadEvalMetrics evaluate_heads(const EarlyTwoTowerModel& model,
                               std::span<const TrainingRecord> records,
                               double cqs_upper_bound) {
    if (records.empty()) throw ConfigError("evaluate_heads: empty eval set");
    HeadEvalMetrics m;
    std::vector<double> ctr_preds, cqs_preds, cqs_labels;
    std::vector<uint8_t> ctr_labels;
    double sum_yctr = 0.0, sum_click = 0.0, sum_gap = 0.0;
    size_t out_of_range = 0;
    for (const TrainingRecord& r : records) {
        EarlyTwoTowerModel::Outputs out =
            model.predict(r.user_features, r.ad_features);
        cqs_preds.push_back(out.y_cqs);
        cqs_labels.push_back(r.final_cqs);
        sum_gap += std::abs(out.y_ctr - r.teacher_ectr);
        if (out.y_cqs < 0.0 || out.y_cqs > cqs_upper_bound) ++out_of_range;
        if (r.impressed && r.ctr_traffic) {
            ctr_preds.push_back(out.y_ctr);
            ctr_labels.push_back(r.click_label ? 1 : 0);
            sum_yctr += out.y_ctr;
            sum_click += r.click_label ? 1.0 : 0.0;
        }
    }
    m.record_count = records.size();
    m.ctr_record_count = ctr_labels.size();
    if (!ctr_labels.empty()) {
        m.ne_ctr = normalized_entropy(ctr_preds, ctr_labels);
        m.auc_ctr = auc(ctr_preds, ctr_labels);
        m.mean_y_ctr = sum_yctr / static_cast<double>(ctr_labels.size());
        m.empirical_ctr = sum_click / static_cast<double>(ctr_labels.size());
    }
    m.mse_cqs = mean_squared_error(cqs_preds, cqs_labels);
    m.mean_abs_ctr_teacher_gap = sum_gap / static_cast<double>(records.size());
    m.cqs_out_of_range_frac =
        static_cast<double>(out_of_range) / static_cast<double>(records.size());
    return m;
}

}  // namespace adlab
