#include "adlab/rankers.hpp"

#include <algorithm>
#include <cmath>

#include "adlab/losses.hpp"

namespace adlab {

double QualityScalars::total() const {
    double t = 0.0;
    for (double v : values) t += v;
    return t;
}

void QualityScalars::validate(size_t num_events) const {
    if (values.size() != num_events)
        throw ConfigError("quality scalars: expected " +
                          std::to_string(num_events) + " values, got " +
                          std::to_string(values.size()));
    for (double v : values)
        if (!(v > 0.0)) throw ConfigError("quality scalars must be positive");
}

double compute_cqs(std::span<const double> quality_preds,
                   const QualityScalars& scalars) {
    if (quality_preds.size() != scalars.values.size())
        throw ConfigError("compute_cqs: prediction/scalar length mismatch");
    double cqs = 0.0;
    for (size_t i = 0; i < quality_preds.size(); ++i)
        cqs += scalars.values[i] * quality_preds[i];
    return cqs;
}

double ad_quality(double cqs) { return -cqs; }

double total_value(double bid, double pctr, double cqs, double quality_weight) {
    return bid * pctr + quality_weight * ad_quality(cqs);
}

namespace {

MlpSpec prob_mlp_spec(size_t input_dim, const std::vector<size_t>& hidden) {
    MlpSpec spec;
    spec.input_dim = input_dim;
    for (size_t h : hidden) spec.layers.push_back({h, Activation::kRelu});
    spec.layers.push_back({1, Activation::kSigmoid});
    return spec;
}

}  // namespace

WideProbModel::WideProbModel(std::string prefix, const FeatureSchema& schema,
                             size_t embedding_dim,
                             const std::vector<size_t>& hidden,
                             uint64_t init_seed)
    : user_emb_(prefix + ".user", schema.user_vocabs, embedding_dim),
      ad_emb_(prefix + ".ad", schema.ad_vocabs, embedding_dim),
      mlp_(prefix + ".mlp",
           prob_mlp_spec(
               (schema.user_vocabs.size() + schema.ad_vocabs.size()) *
                   embedding_dim,
               hidden)) {
    Rng rng(init_seed);
    user_emb_.init(params_, rng);
    ad_emb_.init(params_, rng);
    mlp_.init(params_, rng);
}

void WideProbModel::bind() {
    user_emb_.bind(params_);
    ad_emb_.bind(params_);
    mlp_.bind(params_);
}

double WideProbModel::train_example(std::span<const int32_t> user_features,
                                    std::span<const int32_t> ad_features,
                                    double label) {
    const size_t du = user_emb_.concat_dim();
    const size_t da = ad_emb_.concat_dim();
    input_.resize(du + da);
    user_emb_.forward(user_features, std::span(input_).subspan(0, du));
    ad_emb_.forward(ad_features, std::span(input_).subspan(du, da));
    double p = mlp_.forward_scalar(input_, tape_);
    LossGrad lg = binary_ce_loss(p, label);
    dinput_.assign(du + da, 0.0);
    const double upstream[1] = {lg.grad};
    mlp_.backward(tape_, upstream, dinput_);
    user_emb_.backward(user_features, std::span(dinput_).subspan(0, du));
    ad_emb_.backward(ad_features, std::span(dinput_).subspan(du, da));
    return lg.loss;
}

double WideProbModel::predict(std::span<const int32_t> user_features,
                              std::span<const int32_t> ad_features) const {
    const size_t du = user_emb_.concat_dim();
    const size_t da = ad_emb_.concat_dim();
    std::vector<double> input(du + da);
    user_emb_.forward(user_features, std::span(input).subspan(0, du));
    ad_emb_.forward(ad_features, std::span(input).subspan(du, da));
    double out[1];
    mlp_.infer(input, infer_scratch_, out);
    return out[0];
}

FrozenWideScorer::FrozenWideScorer(const WideProbModel& model,
                                   const World& world)
    : model_(&model) {
    const Mlp& mlp = model.mlp();
    const Matrix& w0 = mlp.layer_weight(0);
    const size_t h0 = w0.rows();
    const size_t du = model.user_dim();
    const size_t da = model.ad_emb().concat_dim();
    ad_parts_ = Matrix(world.num_ads(), h0);
    std::vector<double> x_a(da);
    for (size_t ad = 0; ad < world.num_ads(); ++ad) {
        model.ad_emb().forward(world.ad(static_cast<int32_t>(ad)).features, x_a);
        auto part = ad_parts_.row(ad);
        for (size_t i = 0; i < h0; ++i)
            part[i] = dot_unrolled(w0.data() + i * w0.cols() + du, x_a.data(), da);
    }
}

void FrozenWideScorer::prepare_user(std::span<const int32_t> user_features,
                                    std::vector<double>& user_part) const {
    const Mlp& mlp = model_->mlp();
    const Matrix& w0 = mlp.layer_weight(0);
    const Matrix& b0 = mlp.layer_bias(0);
    const size_t h0 = w0.rows();
    const size_t du = model_->user_dim();
    std::vector<double> x_u(du);
    model_->user_emb().forward(user_features, x_u);
    user_part.resize(h0);
    for (size_t i = 0; i < h0; ++i)
        user_part[i] =
            dot_unrolled(w0.data() + i * w0.cols(), x_u.data(), du) + b0(i, 0);
}

void FrozenWideScorer::score_batch(std::span<const double> user_part,
                                   std::span<const int32_t> ad_ids,
                                   ScorerScratch& scratch,
                                   std::span<double> out) const {
    const Mlp& mlp = model_->mlp();
    const MlpSpec& spec = mlp.spec();
    const size_t n = ad_ids.size();
    const size_t h0 = user_part.size();
    if (scratch.layer0.rows() != h0 || scratch.layer0.cols() != n)
        scratch.layer0 = Matrix(h0, n);
    const Activation act0 = spec.layers[0].act;
    double* __restrict__ a0 = scratch.layer0.data();
    for (size_t k = 0; k < n; ++k) {
        auto part = ad_parts_.row(static_cast<size_t>(ad_ids[k]));
        for (size_t i = 0; i < h0; ++i) {
            double z = user_part[i] + part[i];
            switch (act0) {
                case Activation::kIdentity: break;
                case Activation::kRelu: z = z > 0.0 ? z : 0.0; break;
                case Activation::kSigmoid: z = sigmoid(z); break;
            }
            a0[i * n + k] = z;
        }
    }
    if (spec.layers.size() == 1) {
        for (size_t k = 0; k < n; ++k) out[k] = a0[k];
        return;
    }
    const Matrix& result =
        mlp.infer_batch_tail(1, scratch.layer0, scratch.ping, scratch.pong);
    for (size_t k = 0; k < n; ++k) out[k] = result(0, k);
}

double FrozenWideScorer::score(std::span<const double> user_part, int32_t ad_id,
                               ScorerScratch& scratch) const {
    const int32_t ids[1] = {ad_id};
    double out[1];
    score_batch(user_part, ids, scratch, out);
    return out[0];
}

FinalStageScorers::FinalStageScorers(
    const FinalCtrModel& ctr,
    const std::vector<std::unique_ptr<QualityEventModel>>& quality,
    const World& world, QualityScalars scalars, double quality_weight)
    : ctr_(ctr, world), scalars_(std::move(scalars)),
      quality_weight_(quality_weight) {
    scalars_.validate(quality.size());
    quality_.reserve(quality.size());
    for (const auto& q : quality) quality_.emplace_back(*q, world);
}

void FinalStageScorers::prepare_user(const UserProfile& user,
                                     UserContext& ctx) const {
    ctr_.prepare_user(user.features, ctx.ctr_part);
    ctx.quality_parts.resize(quality_.size());
    for (size_t m = 0; m < quality_.size(); ++m)
        quality_[m].prepare_user(user.features, ctx.quality_parts[m]);
}

double FinalStageScorers::ectr(const UserContext& ctx, int32_t ad_id,
                               ScorerScratch& s) const {
    return ctr_.score(ctx.ctr_part, ad_id, s);
}

void FinalStageScorers::quality_preds(const UserContext& ctx, int32_t ad_id,
                                      ScorerScratch& s,
                                      std::span<double> out) const {
    for (size_t m = 0; m < quality_.size(); ++m)
        out[m] = quality_[m].score(ctx.quality_parts[m], ad_id, s);
}

ScoredAd FinalStageScorers::score(const UserContext& ctx, const World& world,
                                  int32_t ad_id, ScorerScratch& s) const {
    ScoredAd scored;
    scored.ad_id = ad_id;
    scored.stage = Stage::kFinal;
    scored.bid = world.ad(ad_id).bid;
    scored.pctr = ectr(ctx, ad_id, s);
    scored.quality_event_preds.resize(quality_.size());
    quality_preds(ctx, ad_id, s, scored.quality_event_preds);
    scored.cqs = compute_cqs(scored.quality_event_preds, scalars_);
    scored.total_value =
        total_value(scored.bid, scored.pctr, scored.cqs, quality_weight_);
    return scored;
}

void FinalStageScorers::score_batch(const UserContext& ctx, const World& world,
                                    std::span<const int32_t> ad_ids,
                                    ScorerScratch& s,
                                    std::vector<ScoredAd>& out) const {
    const size_t n = ad_ids.size();
    const size_t m = quality_.size();
    std::vector<double> ectrs(n);
    ctr_.score_batch(ctx.ctr_part, ad_ids, s, ectrs);
    std::vector<std::vector<double>> preds(m, std::vector<double>(n));
    for (size_t q = 0; q < m; ++q)
        quality_[q].score_batch(ctx.quality_parts[q], ad_ids, s, preds[q]);
    std::vector<double> event(m);
    for (size_t k = 0; k < n; ++k) {
        ScoredAd scored;
        scored.ad_id = ad_ids[k];
        scored.stage = Stage::kFinal;
        scored.bid = world.ad(ad_ids[k]).bid;
        scored.pctr = ectrs[k];
        for (size_t q = 0; q < m; ++q) event[q] = preds[q][k];
        scored.quality_event_preds = event;
        scored.cqs = compute_cqs(event, scalars_);
        scored.total_value =
            total_value(scored.bid, scored.pctr, scored.cqs, quality_weight_);
        out.push_back(std::move(scored));
    }
}

namespace {

MlpSpec tower_spec(size_t input_dim, const StudentConfig& c) {
    MlpSpec spec;
    spec.input_dim = input_dim;
    for (size_t h : c.tower_hidden) spec.layers.push_back({h, Activation::kRelu});
    spec.layers.push_back({c.tower_dim, Activation::kIdentity});
    return spec;
}

MlpSpec head_spec(size_t input_dim, const StudentConfig& c, Activation out_act) {
    MlpSpec spec;
    spec.input_dim = input_dim;
    for (size_t h : c.head_hidden) spec.layers.push_back({h, Activation::kRelu});
    spec.layers.push_back({1, out_act});
    return spec;
}

std::vector<size_t> select_vocabs(const std::vector<size_t>& vocabs,
                                  const std::vector<size_t>& slots) {
    std::vector<size_t> out;
    out.reserve(slots.size());
    for (size_t s : slots) out.push_back(vocabs[s]);
    return out;
}

}  // namespace

EarlyTwoTowerModel::EarlyTwoTowerModel(const FeatureSchema& schema,
                                       const StudentConfig& config,
                                       uint64_t init_seed)
    : config_(config),
      early_user_slots_(schema.early_user_slots),
      early_ad_slots_(schema.early_ad_slots),
      user_emb_("student.user", select_vocabs(schema.user_vocabs, schema.early_user_slots),
                config.embedding_dim),
      ad_emb_("student.ad", select_vocabs(schema.ad_vocabs, schema.early_ad_slots),
              config.embedding_dim),
      user_tower_("student.user_tower", tower_spec(user_emb_.concat_dim(), config)),
      ad_tower_("student.ad_tower", tower_spec(ad_emb_.concat_dim(), config)),
      ctr_head_("student.ctr_head",
                head_spec(3 * config.tower_dim, config, Activation::kSigmoid)),
      cqs_head_("student.cqs_head",
                head_spec(3 * config.tower_dim, config, Activation::kIdentity)),
      teacher_head_("student.teacher_head",
                    head_spec(3 * config.tower_dim, config, Activation::kSigmoid)) {
    Rng rng(init_seed);
    user_emb_.init(params_, rng);
    ad_emb_.init(params_, rng);
    user_tower_.init(params_, rng);
    ad_tower_.init(params_, rng);
    ctr_head_.init(params_, rng);
    cqs_head_.init(params_, rng);
    teacher_head_.init(params_, rng);
}

void EarlyTwoTowerModel::bind() {
    user_emb_.bind(params_);
    ad_emb_.bind(params_);
    user_tower_.bind(params_);
    ad_tower_.bind(params_);
    ctr_head_.bind(params_);
    cqs_head_.bind(params_);
    teacher_head_.bind(params_);
}

void EarlyTwoTowerModel::select_user(std::span<const int32_t> all,
                                     std::vector<int32_t>& out) const {
    out.resize(early_user_slots_.size());
    for (size_t i = 0; i < early_user_slots_.size(); ++i)
        out[i] = all[early_user_slots_[i]];
}

void EarlyTwoTowerModel::select_ad(std::span<const int32_t> all,
                                   std::vector<int32_t>& out) const {
    out.resize(early_ad_slots_.size());
    for (size_t i = 0; i < early_ad_slots_.size(); ++i)
        out[i] = all[early_ad_slots_[i]];
}

void EarlyTwoTowerModel::interaction(std::span<const double> h_u,
                                     std::span<const double> h_a,
                                     std::vector<double>& x) const {
    const size_t d = config_.tower_dim;
    x.resize(3 * d);
    for (size_t i = 0; i < d; ++i) {
        x[i] = h_u[i];
        x[d + i] = h_a[i];
        x[2 * d + i] = h_u[i] * h_a[i];
    }
}

EarlyTwoTowerModel::Outputs EarlyTwoTowerModel::forward_train(
    std::span<const int32_t> user_features,
    std::span<const int32_t> ad_features) {
    select_user(user_features, uf_);
    select_ad(ad_features, af_);
    xu_.resize(user_emb_.concat_dim());
    xa_.resize(ad_emb_.concat_dim());
    user_emb_.forward(uf_, xu_);
    ad_emb_.forward(af_, xa_);
    user_tower_.forward(xu_, tape_user_);
    ad_tower_.forward(xa_, tape_ad_);
    interaction(tape_user_.post.back(), tape_ad_.post.back(), inter_);
    Outputs out;
    out.y_ctr = ctr_head_.forward_scalar(inter_, tape_ctr_);
    out.y_cqs = cqs_head_.forward_scalar(inter_, tape_cqs_);
    out.y_teacher = teacher_head_.forward_scalar(inter_, tape_teacher_);
    return out;
}

void EarlyTwoTowerModel::backward_train(double d_yctr, double d_ycqs,
                                        double d_yteacher) {
    if (!tape_user_.valid || !tape_ad_.valid)
        throw UsageError("student: backward_train without forward_train");
    const size_t d = config_.tower_dim;
    std::vector<double> dx(3 * d, 0.0);
    if (d_yctr != 0.0) {
        const double up[1] = {d_yctr};
        ctr_head_.backward(tape_ctr_, up, dx);
    }
    if (d_ycqs != 0.0) {
        const double up[1] = {d_ycqs};
        cqs_head_.backward(tape_cqs_, up, dx);
    }
    if (d_yteacher != 0.0) {
        const double up[1] = {d_yteacher};
        teacher_head_.backward(tape_teacher_, up, dx);
    }
    const auto& h_u = tape_user_.post.back();
    const auto& h_a = tape_ad_.post.back();
    std::vector<double> dh_u(d), dh_a(d);
    for (size_t i = 0; i < d; ++i) {
        dh_u[i] = dx[i] + dx[2 * d + i] * h_a[i];
        dh_a[i] = dx[d + i] + dx[2 * d + i] * h_u[i];
    }
    std::vector<double> dxu(xu_.size(), 0.0), dxa(xa_.size(), 0.0);
    user_tower_.backward(tape_user_, dh_u, dxu);
    ad_tower_.backward(tape_ad_, dh_a, dxa);
    user_emb_.backward(uf_, dxu);
    ad_emb_.backward(af_, dxa);
}

EarlyTwoTowerModel::Outputs EarlyTwoTowerModel::predict(
    std::span<const int32_t> user_features,
    std::span<const int32_t> ad_features) const {
    std::vector<double> h_u, h_a;
    user_vector(user_features, h_u);
    ad_vector(ad_features, h_a);
    std::vector<double> x;
    interaction(h_u, h_a, x);
    std::vector<double> scratch;
    Outputs out;
    double y[1];
    ctr_head_.infer(x, scratch, y);
    out.y_ctr = y[0];
    cqs_head_.infer(x, scratch, y);
    out.y_cqs = y[0];
    teacher_head_.infer(x, scratch, y);
    out.y_teacher = y[0];
    return out;
}

void EarlyTwoTowerModel::user_vector(std::span<const int32_t> user_features,
                                     std::vector<double>& h_u) const {
    ServeScratch s;
    user_vector(user_features, h_u, s);
}

void EarlyTwoTowerModel::ad_vector(std::span<const int32_t> ad_features,
                                   std::vector<double>& h_a) const {
    ServeScratch s;
    ad_vector(ad_features, h_a, s);
}

EarlyTwoTowerModel::ServingScores EarlyTwoTowerModel::serve(
    std::span<const double> h_u, std::span<const double> h_a) const {
    ServeScratch s;
    return serve(h_u, h_a, s);
}

void EarlyTwoTowerModel::user_vector(std::span<const int32_t> user_features,
                                     std::vector<double>& h_u,
                                     ServeScratch& s) const {
    select_user(user_features, s.ids);
    s.x.resize(user_emb_.concat_dim());
    user_emb_.forward(s.ids, s.x);
    h_u.resize(config_.tower_dim);
    user_tower_.infer(s.x, s.mlp, h_u);
}

void EarlyTwoTowerModel::ad_vector(std::span<const int32_t> ad_features,
                                   std::vector<double>& h_a,
                                   ServeScratch& s) const {
    select_ad(ad_features, s.ids);
    s.x.resize(ad_emb_.concat_dim());
    ad_emb_.forward(s.ids, s.x);
    h_a.resize(config_.tower_dim);
    ad_tower_.infer(s.x, s.mlp, h_a);
}

EarlyTwoTowerModel::ServingScores EarlyTwoTowerModel::serve(
    std::span<const double> h_u, std::span<const double> h_a,
    ServeScratch& s) const {
    interaction(h_u, h_a, s.inter);
    double y[1];
    ServingScores scores;
    ctr_head_.infer(s.inter, s.mlp, y);
    scores.y_ctr = y[0];
    cqs_head_.infer(s.inter, s.mlp, y);
    scores.y_cqs = y[0];
    return scores;
}

void EarlyTwoTowerModel::score_candidates(const World& world,
                                          std::span<const int32_t> ad_ids,
                                          std::span<const double> h_u,
                                          BatchScratch& s,
                                          std::vector<ServingScores>& out) const {
    const size_t n = ad_ids.size();
    const size_t slots = early_ad_slots_.size();
    const size_t dim = config_.embedding_dim;
    const size_t in_dim = ad_emb_.concat_dim();
    if (s.inputs.rows() != in_dim || s.inputs.cols() != n)
        s.inputs = Matrix(in_dim, n);
    for (size_t k = 0; k < n; ++k) {
        const auto& features = world.ad(ad_ids[k]).features;
        for (size_t sl = 0; sl < slots; ++sl) {
            auto row = ad_emb_.row(sl, features[early_ad_slots_[sl]]);
            for (size_t d = 0; d < dim; ++d)
                s.inputs(sl * dim + d, k) = row[d];
        }
    }
    const Matrix& towers = ad_tower_.infer_batch(s.inputs, s.ping, s.pong);

    const size_t d = config_.tower_dim;
    if (s.inter.rows() != 3 * d || s.inter.cols() != n)
        s.inter = Matrix(3 * d, n);
    for (size_t i = 0; i < d; ++i) {
        const double hu = h_u[i];
        const double* __restrict__ ha = towers.data() + i * n;
        double* __restrict__ top = s.inter.data() + i * n;
        double* __restrict__ mid = s.inter.data() + (d + i) * n;
        double* __restrict__ bot = s.inter.data() + (2 * d + i) * n;
        for (size_t k = 0; k < n; ++k) {
            top[k] = hu;
            mid[k] = ha[k];
            bot[k] = hu * ha[k];
        }
    }
    out.resize(n);
    const Matrix& ctr = ctr_head_.infer_batch(s.inter, s.ping, s.pong);
    for (size_t k = 0; k < n; ++k) out[k].y_ctr = ctr(0, k);
    const Matrix& cqs = cqs_head_.infer_batch(s.inter, s.ping, s.pong);
    for (size_t k = 0; k < n; ++k) out[k].y_cqs = cqs(0, k);
}

}  // namespace adlab
