// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include "cobev/head.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cobev {

namespace {

constexpr double kProbEps = 1e-7;
constexpr char kParamsMagic[4] = {'C', 'B', 'H', 'P'};
constexpr std::uint32_t kParamsVersion = 1;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct ClampedProb {
    double p;
    bool clamped;
};

ClampedProb clamp_prob(double p_raw) {
    if (p_raw < kProbEps) return {kProbEps, true};
    if (p_raw > 1.0 - kProbEps) return {1.0 - kProbEps, true};
    return {p_raw, false};
}

// d(focal contribution)/d(logit) for one cell, before the 1/npos factor.
double focal_logit_grad(double p, bool clamped, double target, double alpha, double beta) {
    if (clamped) return 0.0;
    if (target == 1.0) {
        return alpha * p * std::pow(1.0 - p, alpha) * std::log(p) -
               std::pow(1.0 - p, alpha + 1.0);
    }
    return std::pow(1.0 - target, beta) *
           (std::pow(p, alpha + 1.0) -
            alpha * std::pow(p, alpha) * (1.0 - p) * std::log(1.0 - p));
}

double focal_cell_loss(double p, double target, double alpha, double beta) {
    if (target == 1.0) return -std::pow(1.0 - p, alpha) * std::log(p);
    return -std::pow(1.0 - target, beta) * std::pow(p, alpha) * std::log(1.0 - p);
}

}  // namespace

HeadParams HeadParams::zeros(int feature_channels) {
    if (feature_channels <= 0)
        throw std::invalid_argument("HeadParams: feature channel count must be positive");
    HeadParams p;
    p.feature_channels = feature_channels;
    const int total = p.total_channels();
    p.w_cls.assign(total, 0.0);
    p.w_reg.assign(static_cast<std::size_t>(total) * kRegTargets, 0.0);
    p.b_reg.assign(kRegTargets, 0.0);
    p.q.assign(feature_channels, 0.0);
    return p;
}

std::size_t HeadParams::parameter_count() const {
    return w_cls.size() + 1 + w_reg.size() + b_reg.size() + q.size();
}

std::vector<double> flatten(const HeadParams& params) {
    std::vector<double> out;
    out.reserve(params.parameter_count());
    out.insert(out.end(), params.w_cls.begin(), params.w_cls.end());
    out.push_back(params.b_cls);
    out.insert(out.end(), params.w_reg.begin(), params.w_reg.end());
    out.insert(out.end(), params.b_reg.begin(), params.b_reg.end());
    out.insert(out.end(), params.q.begin(), params.q.end());
    return out;
}

HeadParams unflatten(const std::vector<double>& values, int feature_channels) {
    HeadParams p = HeadParams::zeros(feature_channels);
    if (values.size() != p.parameter_count())
        throw std::invalid_argument("unflatten: wrong parameter count");
    std::size_t i = 0;
    for (double& v : p.w_cls) v = values[i++];
    p.b_cls = values[i++];
    for (double& v : p.w_reg) v = values[i++];
    for (double& v : p.b_reg) v = values[i++];
    for (double& v : p.q) v = values[i++];
    return p;
}

void save_params(const HeadParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_params: cannot open " + path);
    out.write(kParamsMagic, 4);
    const auto put_u32 = [&out](std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    put_u32(kParamsVersion);
    put_u32(static_cast<std::uint32_t>(params.feature_channels));
    put_u32(kRegTargets);
    for (const double v : flatten(params)) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    }
    if (!out) throw std::runtime_error("save_params: write failed for " + path);
}

HeadParams load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_params: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kParamsMagic, 4) != 0)
        throw std::runtime_error("load_params: bad magic in " + path);
    const auto get_u32 = [&in, &path]() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw std::runtime_error("load_params: truncated file " + path);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    };
    const std::uint32_t version = get_u32();
    if (version != kParamsVersion)
        throw std::runtime_error("load_params: unsupported version in " + path);
    const std::uint32_t channels = get_u32();
    const std::uint32_t reg_targets = get_u32();
    if (reg_targets != kRegTargets)
        throw std::runtime_error("load_params: regression target mismatch in " + path);
    HeadParams shape = HeadParams::zeros(static_cast<int>(channels));
    std::vector<double> values(shape.parameter_count());
    for (double& v : values) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        if (!in) throw std::runtime_error("load_params: truncated file " + path);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        std::memcpy(&v, &bits, 8);
        if (!std::isfinite(v))
            throw std::runtime_error("load_params: non-finite parameter in " + path);
    }
    return unflatten(values, static_cast<int>(channels));
}

HeadOutput head_forward(const BevGrid& fused, const HeadParams& params) {
    if (fused.channels != params.total_channels())
        throw std::invalid_argument("head_forward: channel count mismatch");
    HeadOutput out{ScalarMap::make(fused.spec.rows, fused.spec.cols, 0.0),
                   BevGrid::make(fused.spec, kRegTargets, 0.0)};
    const int total = params.total_channels();
    for (int r = 0; r < fused.spec.rows; ++r) {
        for (int c = 0; c < fused.spec.cols; ++c) {
            const double* cell = fused.cell(r, c);
            double z = params.b_cls;
            for (int ch = 0; ch < total; ++ch) z += params.w_cls[ch] * cell[ch];
            out.heatmap.at(r, c) = sigmoid(z);
            double* reg = out.reg.cell(r, c);
            for (int t = 0; t < kRegTargets; ++t) {
                double v = params.b_reg[t];
                for (int ch = 0; ch < total; ++ch)
                    v += params.w_reg[static_cast<std::size_t>(ch) * kRegTargets + t] * cell[ch];
                reg[t] = v;
            }
        }
    }
    return out;
}

double gaussian_focal_loss(const ScalarMap& pred, const ScalarMap& target,
                           double alpha, double beta) {
    if (pred.rows != target.rows || pred.cols != target.cols)
        throw std::invalid_argument("gaussian_focal_loss: dimension mismatch");
    double loss = 0.0;
    int npos = 0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double t = target.values[i];
        const double p = clamp_prob(pred.values[i]).p;
        if (t == 1.0) ++npos;
        loss += focal_cell_loss(p, t, alpha, beta);
    }
    return loss / std::max(1, npos);
}

double l1_reg_loss(const BevGrid& reg, const BevGrid& target,
                   const std::vector<std::uint8_t>& mask) {
    if (reg.spec != target.spec || reg.channels != target.channels)
        throw std::invalid_argument("l1_reg_loss: dimension mismatch");
    if (mask.size() != static_cast<std::size_t>(reg.spec.cell_count()))
        throw std::invalid_argument("l1_reg_loss: mask size mismatch");
    double loss = 0.0;
    std::size_t masked = 0;
    for (int r = 0; r < reg.spec.rows; ++r) {
        for (int c = 0; c < reg.spec.cols; ++c) {
            if (!mask[static_cast<std::size_t>(r) * reg.spec.cols + c]) continue;
            ++masked;
            for (int t = 0; t < reg.channels; ++t)
                loss += std::abs(reg.at(r, c, t) - target.at(r, c, t));
        }
    }
    if (masked == 0) return 0.0;
    return loss / (static_cast<double>(masked) * reg.channels);
}

Targets render_targets(const std::vector<GroundTruthBox>& ego_boxes, const GridSpec& spec,
                       double splat_factor) {
    Targets t{ScalarMap::make(spec.rows, spec.cols, 0.0),
              BevGrid::make(spec, kRegTargets, 0.0),
              std::vector<std::uint8_t>(static_cast<std::size_t>(spec.cell_count()), 0)};
    for (const GroundTruthBox& box : ego_boxes) {
        const auto cell = ego_to_bev({box.x, box.y, box.z}, spec);
        if (!cell) continue;
        const double radius =
            footprint_splat_radius(box.w, box.l, spec.resolution, splat_factor);
        draw_gaussian_max(t.heatmap, cell->row, cell->col, 1.0, radius);
        const std::size_t flat = static_cast<std::size_t>(cell->row) * spec.cols + cell->col;
        if (t.mask[flat]) continue;  // first box in a cell wins
        t.mask[flat] = 1;
        double* reg = t.reg.cell(cell->row, cell->col);
        reg[0] = (box.x - spec.cell_center_x(cell->col)) / spec.resolution;
        reg[1] = (box.y - spec.cell_center_y(cell->row)) / spec.resolution;
        reg[2] = box.w;
        reg[3] = box.h;
        reg[4] = box.l;
        reg[5] = std::sin(box.yaw);
        reg[6] = std::cos(box.yaw);
    }
    return t;
}

TrainSample make_train_sample(BevGrid base_features, std::vector<VpePoint> vpe_points,
                              BevGrid box_grid, const std::vector<GroundTruthBox>& ego_gts,
                              double splat_factor) {
    if (base_features.spec != box_grid.spec)
        throw std::invalid_argument("make_train_sample: grid spec mismatch");
    TrainSample sample;
    sample.targets = render_targets(ego_gts, base_features.spec, splat_factor);
    sample.base_features = std::move(base_features);
    sample.vpe_points = std::move(vpe_points);
    sample.box_grid = std::move(box_grid);
    return sample;
}

BevGrid assemble_fused(const TrainSample& sample, const std::vector<double>& q) {
    const BevGrid vpe = build_vpe(sample.vpe_points, VpeParams{q}, sample.base_features.spec);
    return fuse(refine_features(sample.base_features, vpe), sample.box_grid);
}

void TrainConfig::validate() const {
    if (learning_rate < 0.0) throw std::invalid_argument("TrainConfig: negative learning rate");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: negative epoch count");
    if (focal_alpha < 0.0 || focal_beta < 0.0)
        throw std::invalid_argument("TrainConfig: focal exponents must be >= 0");
}

namespace {

// Training-time representation: the q-independent channels are packed once,
// embedding cells stay sparse so gradients can reach q.
struct PackedSample {
    int rows = 0, cols = 0;
    std::vector<double> dense;  // cells x (C + 5)
    std::vector<std::pair<std::int64_t, double>> vpe;  // (flat cell, max conf), sorted
    const Targets* targets = nullptr;
    int npos = 1;
};

PackedSample pack_sample(const TrainSample& sample, int feature_channels) {
    if (sample.base_features.channels != feature_channels)
        throw std::invalid_argument("train: sample feature channels mismatch");
    if (sample.box_grid.channels != kBoxChannelCount)
        throw std::invalid_argument("train: sample box grid must have 5 channels");

    const GridSpec& spec = sample.base_features.spec;
    const int total = feature_channels + kBoxChannelCount;
    PackedSample packed;
    packed.rows = spec.rows;
    packed.cols = spec.cols;
    packed.dense.resize(static_cast<std::size_t>(spec.cell_count()) * total);
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            double* dst =
                packed.dense.data() +
                (static_cast<std::size_t>(r) * spec.cols + c) * total;
            const double* f = sample.base_features.cell(r, c);
            const double* b = sample.box_grid.cell(r, c);
            std::copy(f, f + feature_channels, dst);
            std::copy(b, b + kBoxChannelCount, dst + feature_channels);
        }
    }

    ScalarMap conf = ScalarMap::make(spec.rows, spec.cols, -1.0);
    for (const VpePoint& p : sample.vpe_points) {
        if (p.row < 0 || p.row >= spec.rows || p.col < 0 || p.col >= spec.cols) continue;
        conf.at(p.row, p.col) = std::max(conf.at(p.row, p.col), p.confidence);
    }
    for (int r = 0; r < spec.rows; ++r)
        for (int c = 0; c < spec.cols; ++c)
            if (conf.at(r, c) >= 0.0)
                packed.vpe.emplace_back(static_cast<std::int64_t>(r) * spec.cols + c,
                                        conf.at(r, c));

    packed.targets = &sample.targets;
    int npos = 0;
    for (const double t : sample.targets.heatmap.values)
        if (t == 1.0) ++npos;
    packed.npos = std::max(1, npos);
    return packed;
}

struct LossAccumulator {
    double loss = 0.0;
    HeadParams grad;
};

// Forward + backward over one packed sample, accumulating into `acc`.
// When `grad` is false only the loss is computed.
void accumulate_sample(const PackedSample& sample, const HeadParams& params,
                       const TrainConfig& cfg, bool with_grad, LossAccumulator& acc) {
    const int total = params.total_channels();
    const int c_feat = params.feature_channels;
    const Targets& targets = *sample.targets;

    // Embedding contribution per unit confidence, refreshed each call since
    // w and q move between epochs.
    double wq_cls = 0.0;
    std::array<double, kRegTargets> wq_reg{};
    for (int ch = 0; ch < c_feat; ++ch) {
        wq_cls += params.w_cls[ch] * params.q[ch];
        for (int t = 0; t < kRegTargets; ++t)
            wq_reg[t] += params.w_reg[static_cast<std::size_t>(ch) * kRegTargets + t] *
                         params.q[ch];
    }

    const double inv_npos = 1.0 / sample.npos;
    std::size_t masked = 0;
    for (const std::uint8_t m : targets.mask) masked += m;
    const double l1_norm =
        masked > 0 ? 1.0 / (static_cast<double>(masked) * kRegTargets) : 0.0;

    double focal = 0.0;
    double l1 = 0.0;
    std::size_t vpe_cursor = 0;
    const std::int64_t cell_total =
        static_cast<std::int64_t>(sample.rows) * sample.cols;
    for (std::int64_t cell = 0; cell < cell_total; ++cell) {
        const double* dense = sample.dense.data() + static_cast<std::size_t>(cell) * total;
        double vpe_conf = -1.0;
        if (vpe_cursor < sample.vpe.size() && sample.vpe[vpe_cursor].first == cell) {
            vpe_conf = sample.vpe[vpe_cursor].second;
            ++vpe_cursor;
        }

        double z = params.b_cls;
        for (int ch = 0; ch < total; ++ch) z += params.w_cls[ch] * dense[ch];
        if (vpe_conf >= 0.0) z += vpe_conf * wq_cls;

        const double target = targets.heatmap.values[static_cast<std::size_t>(cell)];
        const auto [p, clamped] = clamp_prob(sigmoid(z));
        focal += focal_cell_loss(p, target, cfg.focal_alpha, cfg.focal_beta);

        const bool in_mask = targets.mask[static_cast<std::size_t>(cell)] != 0;
        std::array<double, kRegTargets> g_reg{};
        if (in_mask) {
            const double* treg =
                targets.reg.values.data() + static_cast<std::size_t>(cell) * kRegTargets;
            for (int t = 0; t < kRegTargets; ++t) {
                double v = params.b_reg[t];
                for (int ch = 0; ch < total; ++ch)
                    v += params.w_reg[static_cast<std::size_t>(ch) * kRegTargets + t] *
                         dense[ch];
                if (vpe_conf >= 0.0) v += vpe_conf * wq_reg[t];
                const double diff = v - treg[t];
                l1 += std::abs(diff);
                const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                g_reg[t] = cfg.lambda_reg * l1_norm * sign;
            }
        }

        if (!with_grad) continue;

        const double g_z = cfg.lambda_cls * inv_npos *
                           focal_logit_grad(p, clamped, target, cfg.focal_alpha, cfg.focal_beta);
        if (g_z != 0.0) {
            for (int ch = 0; ch < total; ++ch) acc.grad.w_cls[ch] += g_z * dense[ch];
            acc.grad.b_cls += g_z;
        }
        if (in_mask) {
            for (int t = 0; t < kRegTargets; ++t) {
                const double g = g_reg[t];
                if (g == 0.0) continue;
                for (int ch = 0; ch < total; ++ch)
                    acc.grad.w_reg[static_cast<std::size_t>(ch) * kRegTargets + t] +=
                        g * dense[ch];
                acc.grad.b_reg[t] += g;
            }
        }
        if (vpe_conf >= 0.0) {
            for (int ch = 0; ch < c_feat; ++ch) {
                double dq = g_z * params.w_cls[ch];
                double dw_extra = g_z;  // times vpe_conf * q below
                if (in_mask) {
                    for (int t = 0; t < kRegTargets; ++t)
                        dq += g_reg[t] *
                              params.w_reg[static_cast<std::size_t>(ch) * kRegTargets + t];
                }
                acc.grad.q[ch] += vpe_conf * dq;
                // The embedded channels also feed the linear weights.
                acc.grad.w_cls[ch] += dw_extra * vpe_conf * params.q[ch];
                if (in_mask) {
                    for (int t = 0; t < kRegTargets; ++t)
                        acc.grad.w_reg[static_cast<std::size_t>(ch) * kRegTargets + t] +=
                            g_reg[t] * vpe_conf * params.q[ch];
                }
            }
        }
    }
    acc.loss += cfg.lambda_cls * focal * inv_npos + cfg.lambda_reg * l1 * l1_norm;
}

LossAccumulator run_batch(const std::vector<PackedSample>& packed, const HeadParams& params,
                          const TrainConfig& cfg, bool with_grad) {
    LossAccumulator acc;
    acc.grad = HeadParams::zeros(params.feature_channels);
    for (const PackedSample& sample : packed)
        accumulate_sample(sample, params, cfg, with_grad, acc);
    const double inv_n = packed.empty() ? 0.0 : 1.0 / static_cast<double>(packed.size());
    acc.loss *= inv_n;
    if (with_grad) {
        for (double& v : acc.grad.w_cls) v *= inv_n;
        acc.grad.b_cls *= inv_n;
        for (double& v : acc.grad.w_reg) v *= inv_n;
        for (double& v : acc.grad.b_reg) v *= inv_n;
        for (double& v : acc.grad.q) v *= inv_n;
    }
    return acc;
}

std::vector<PackedSample> pack_all(const std::vector<TrainSample>& samples,
                                   int feature_channels) {
    if (samples.empty()) throw std::invalid_argument("train: empty dataset");
    std::vector<PackedSample> packed;
    packed.reserve(samples.size());
    for (const TrainSample& s : samples) packed.push_back(pack_sample(s, feature_channels));
    return packed;
}

}  // namespace

double total_loss(const std::vector<TrainSample>& samples, const HeadParams& params,
                  const TrainConfig& config) {
    config.validate();
    const auto packed = pack_all(samples, params.feature_channels);
    return run_batch(packed, params, config, false).loss;
}

HeadParams total_gradient(const std::vector<TrainSample>& samples, const HeadParams& params,
                          const TrainConfig& config) {
    config.validate();
    const auto packed = pack_all(samples, params.feature_channels);
    return run_batch(packed, params, config, true).grad;
}

TrainResult train(const std::vector<TrainSample>& samples, const TrainConfig& config,
                  int feature_channels) {
    config.validate();
    const auto packed = pack_all(samples, feature_channels);

    TrainResult result;
    result.params = HeadParams::zeros(feature_channels);
    result.params.b_cls = config.init_cls_bias;
    result.loss_trace.reserve(config.epochs + 1);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const LossAccumulator acc = run_batch(packed, result.params, config, true);
        if (!std::isfinite(acc.loss))
            throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                     std::to_string(epoch));
        result.loss_trace.push_back(acc.loss);
        const double lr = config.learning_rate;
        for (std::size_t i = 0; i < result.params.w_cls.size(); ++i)
            result.params.w_cls[i] -= lr * acc.grad.w_cls[i];
        result.params.b_cls -= lr * acc.grad.b_cls;
        for (std::size_t i = 0; i < result.params.w_reg.size(); ++i)
            result.params.w_reg[i] -= lr * acc.grad.w_reg[i];
        for (std::size_t i = 0; i < result.params.b_reg.size(); ++i)
            result.params.b_reg[i] -= lr * acc.grad.b_reg[i];
        for (std::size_t i = 0; i < result.params.q.size(); ++i)
            result.params.q[i] -= lr * acc.grad.q[i];
    }
    const double final_loss = run_batch(packed, result.params, config, false).loss;
    if (!std::isfinite(final_loss))
        throw std::runtime_error("train: loss diverged (non-finite) after final step");
    result.loss_trace.push_back(final_loss);
    return result;
}

std::vector<Box3D> decode(const ScalarMap& heatmap, const BevGrid& reg,
                          const GridSpec& spec, double peak_threshold, double box_z) {
    if (heatmap.rows != spec.rows || heatmap.cols != spec.cols)
        throw std::invalid_argument("decode: heatmap does not match grid");
    if (reg.channels != kRegTargets)
        throw std::invalid_argument("decode: regression grid must have 7 channels");

    std::vector<Box3D> boxes;
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            const double v = heatmap.at(r, c);
            if (!(v > peak_threshold)) continue;
            bool is_peak = true;
            for (int dr = -1; dr <= 1 && is_peak; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= spec.rows || cc < 0 || cc >= spec.cols) continue;
                    if (heatmap.at(rr, cc) > v) {
                        is_peak = false;
                        break;
                    }
                }
            }
            if (!is_peak) continue;
            const double* t = reg.cell(r, c);
            Box3D box;
            box.x = spec.cell_center_x(c) + t[0] * spec.resolution;
            box.y = spec.cell_center_y(r) + t[1] * spec.resolution;
            box.z = box_z;
            box.w = std::max(0.05, t[2]);
            box.h = std::max(0.05, t[3]);
            box.l = std::max(0.05, t[4]);
            box.yaw = wrap_angle(std::atan2(t[5], t[6]));
            box.s = v;
            boxes.push_back(box);
        }
    }
    return boxes;
}

}  // namespace cobev
