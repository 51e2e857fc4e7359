// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>
#include <agsplat/objective.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace agsplat {

namespace {

bool
contained_in(const Mask &inner, const Mask &outer) {
    for (std::size_t p = 0; p < inner.pixels(); ++p) {
        if (inner.data()[p] && !outer.data()[p]) return false;
    }
    return true;
}

Vec3
pixel_vec(const ImageD &img, std::size_t p) {
    const auto base = p * 3;
    return {img.data()[base], img.data()[base + 1], img.data()[base + 2]};
}

void
add_pixel(ImageD &img, std::size_t p, const Vec3 &v) {
    const auto base = p * 3;
    img.data()[base] += v.x();
    img.data()[base + 1] += v.y();
    img.data()[base + 2] += v.z();
}

std::vector<Vec3>
mask_means(const ImageD &features, const MaskSet &masks) {
    std::vector<Vec3> means;
    means.reserve(masks.size());
    for (const auto &m : masks.masks()) means.push_back(mean_mask_feature(features, m));
    return means;
}

/// Optimizer state for one parameter block of 3-vectors.
struct MomentBlock {
    std::vector<Vec3> m;
    std::vector<Vec3> v;
    double v_shared = 0.0;

    void resize(std::size_t n) {
        m.resize(n, Vec3::Zero());
        v.resize(n, Vec3::Zero());
    }

    /// Returns true if any parameter changed.
    bool step(std::span<Vec3> params, std::span<const Vec3> grads, double lr, const OptimizeOptions &o, int t) {
        bool changed = false;
        auto apply   = [&](std::size_t i, const Vec3 &delta) {
            if (!delta.isZero(0.0)) {
                params[i] -= delta;
                changed = true;
            }
        };
        switch (o.optimizer) {
        case Optimizer::Adam: {
            const double bc1 = 1.0 - std::pow(o.beta1, t);
            const double bc2 = 1.0 - std::pow(o.beta2, t);
            for (std::size_t i = 0; i < params.size(); ++i) {
                m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * grads[i];
                v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * grads[i].cwiseProduct(grads[i]);
                apply(i, lr * ((m[i] / bc1).array() / ((v[i] / bc2).array().sqrt() + o.epsilon)).matrix());
            }
            break;
        }
        case Optimizer::Momentum:
            for (std::size_t i = 0; i < params.size(); ++i) {
                m[i] = o.beta1 * m[i] + grads[i];
                apply(i, lr * m[i]);
            }
            break;
        case Optimizer::ScaledMomentum: {
            const double bc1 = 1.0 - std::pow(o.beta1, t);
            const double bc2 = 1.0 - std::pow(o.beta2, t);
            double sq        = 0.0;
            for (const auto &g : grads) sq = std::max(sq, g.squaredNorm());
            v_shared         = o.beta2 * v_shared + (1.0 - o.beta2) * sq;
            const double den = std::sqrt(v_shared / bc2) + o.epsilon;
            for (std::size_t i = 0; i < params.size(); ++i) {
                m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * grads[i];
                apply(i, lr * (m[i] / bc1) / den);
            }
            break;
        }
        }
        return changed;
    }
};

class Trainer {
  public:
    Trainer(Scene &scene, std::span<const TrainingView> views, AnchorGraph *graph, const OptimizeOptions &options)
        : mScene(scene), mViews(views), mGraph(graph), mOptions(options) {
        if (views.empty()) throw Error(ErrorCode::InvalidInput, "optimization needs at least one view");
        rebuild_geometry();
    }

    struct Evaluation {
        LossReport report;
        FeatureMatrix feature_grad;
        std::vector<Vec3> offset_grad;
    };

    void rebuild_geometry() {
        const SplatCloud cloud = build_splats(mScene);
        const Eigen::MatrixXd none(Eigen::Index(cloud.size()), 0);
        mRecords.resize(mViews.size());
        mDepthDistortion.resize(mViews.size());
        for (std::size_t v = 0; v < mViews.size(); ++v) {
            blend_values(cloud, mViews[v].camera, none, nullptr, nullptr, &mRecords[v]);
            mDepthDistortion[v] = loss_depth_distortion(mRecords[v]);
        }
    }

    Evaluation evaluate(bool with_grad, std::vector<double> *child_signal) {
        const Hyper &h      = mScene.hyper;
        const auto features = mScene.features();
        const auto n        = mScene.anchors.size();
        const double inv_v  = 1.0 / double(mViews.size());
        Evaluation ev;
        ev.feature_grad = FeatureMatrix::Zero(Eigen::Index(n), 3);

        const auto offsets = collect_offsets(mScene);
        auto local         = loss_local_constraint(offsets);
        ev.report.l_in     = local.value;
        ev.offset_grad     = std::move(local.gradient);
        for (auto &g : ev.offset_grad) g *= h.lambda_in;

        for (std::size_t v = 0; v < mViews.size(); ++v) {
            ev.report.l_d += mDepthDistortion[v] * inv_v;
            const auto &masks = mViews[v].masks;
            if (masks.empty()) continue;
            const ImageD fmap = feature_map_from_records(mRecords[v], features, h.k, true);
            auto intra        = loss_intra_mask(fmap, masks, std::nullopt, mOptions.intra_smoothing, mOptions.intra_per_mask_mean);
            auto inter        = loss_inter_mask_image(fmap, masks);
            ev.report.l_is += intra.value * inv_v;
            ev.report.l_ic += inter.value * inv_v;
            if (!with_grad) continue;
            ImageD grad = std::move(intra.gradient);
            for (std::size_t i = 0; i < grad.data().size(); ++i) {
                grad.data()[i] = (h.lambda_is * grad.data()[i] + h.lambda_ic * inter.gradient.data()[i]) * inv_v;
            }
            ev.feature_grad += backprop_to_anchors(mRecords[v], grad, n, h.k, child_signal, true);
        }

        if (mGraph) {
            mGraph->refresh_weights(features);
            const auto prop  = dirichlet_energy(*mGraph, features);
            ev.report.l_prop = prop.energy;
            if (with_grad) ev.feature_grad += h.lambda_prop * prop.gradient;
        }
        ev.report.total = h.lambda_in * ev.report.l_in + h.lambda_is * ev.report.l_is +
                          h.lambda_ic * ev.report.l_ic + h.lambda_d * ev.report.l_d +
                          (mGraph ? h.lambda_prop * ev.report.l_prop : 0.0);
        if (!std::isfinite(ev.report.total)) {
            std::ostringstream msg;
            msg << "non-finite loss: L_in=" << ev.report.l_in << " L_d=" << ev.report.l_d
                << " L_is=" << ev.report.l_is << " L_ic=" << ev.report.l_ic << " L_prop=" << ev.report.l_prop;
            throw Error(ErrorCode::NumericalFailure, msg.str());
        }
        return ev;
    }

    OptimizeResult run() {
        OptimizeResult result;
        const std::size_t k = std::size_t(mScene.hyper.k);
        mFeatureState.resize(mScene.anchors.size());
        mOffsetState.resize(mScene.num_children());
        std::vector<double> signal_sum(mScene.num_children(), 0.0);
        int signal_count = 0;
        const bool densify_enabled = mGraph == nullptr && mOptions.densify && mOptions.densify_interval > 0;

        for (int it = 0; it < mOptions.iterations; ++it) {
            if (densify_enabled && it > 0 && it % mOptions.densify_interval == 0 && signal_count > 0) {
                for (auto &s : signal_sum) s /= signal_count;
                const double threshold = densify_threshold(signal_sum, mScene.hyper.densify_grad_percentile);
                const auto added       = densify(mScene, signal_sum, threshold);
                result.anchors_added += added;
                if (added > 0) {
                    mFeatureState.resize(mScene.anchors.size());
                    mOffsetState.resize(mScene.num_children());
                    rebuild_geometry();
                }
                signal_sum.assign(mScene.num_children(), 0.0);
                signal_count = 0;
            }

            auto ev = evaluate(true, densify_enabled ? &signal_sum : nullptr);
            if (densify_enabled) ++signal_count;
            result.trajectory.push_back({it, ev.report});

            std::vector<Vec3> feats(mScene.anchors.size());
            std::vector<Vec3> fgrad(mScene.anchors.size());
            for (std::size_t a = 0; a < feats.size(); ++a) {
                feats[a] = mScene.anchors[a].feature;
                fgrad[a] = ev.feature_grad.row(Eigen::Index(a)).transpose();
            }
            mFeatureState.step(feats, fgrad, mOptions.lr_feature, mOptions, it + 1);
            for (std::size_t a = 0; a < feats.size(); ++a) mScene.anchors[a].feature = feats[a];

            if (mOptions.optimize_offsets) {
                auto offsets = collect_offsets(mScene);
                if (mOffsetState.step(offsets, ev.offset_grad, mOptions.lr_offset, mOptions, it + 1)) {
                    for (std::size_t c = 0; c < offsets.size(); ++c) {
                        mScene.anchors[c / k].children[c % k].offset = offsets[c];
                    }
                    rebuild_geometry();
                }
            }
        }
        result.trajectory.push_back({mOptions.iterations, evaluate(false, nullptr).report});
        return result;
    }

  private:
    Scene &mScene;
    std::span<const TrainingView> mViews;
    AnchorGraph *mGraph;
    OptimizeOptions mOptions;
    std::vector<BlendRecords> mRecords;
    std::vector<double> mDepthDistortion;
    MomentBlock mFeatureState;
    MomentBlock mOffsetState;
};

} // namespace

MaskSet
MaskSet::from(std::vector<Mask> masks) {
    MaskSet out;
    for (std::size_t j = 0; j < masks.size(); ++j) {
        if (count_set(masks[j]) == 0) continue;
        bool nested = false;
        for (std::size_t k = 0; k < masks.size() && !nested; ++k) {
            if (k == j || count_set(masks[k]) == 0) continue;
            if (masks[k].width() != masks[j].width() || masks[k].height() != masks[j].height()) {
                throw Error(ErrorCode::InvalidInput, "masks of one view must share dimensions");
            }
            if (!contained_in(masks[j], masks[k])) continue;
            // Identical masks: keep the first.
            nested = !contained_in(masks[k], masks[j]) || k < j;
        }
        if (nested) continue;
        out.mMasks.push_back(masks[j]);
        out.mSource.push_back(j);
    }
    return out;
}

OffsetLoss
loss_local_constraint(std::span<const Vec3> offsets) {
    OffsetLoss out;
    out.gradient.assign(offsets.size(), Vec3::Zero());
    if (offsets.empty()) return out;
    const double inv_n = 1.0 / double(offsets.size());
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        const double excess = offsets[i].squaredNorm() - 1.0;
        const double e      = std::exp(std::max(excess, 0.0));
        out.value += e * inv_n;
        if (excess > 0) out.gradient[i] = 2.0 * e * offsets[i] * inv_n;
    }
    return out;
}

std::vector<Vec3>
collect_offsets(const Scene &scene) {
    std::vector<Vec3> out;
    out.reserve(scene.num_children());
    for (const auto &a : scene.anchors) {
        for (const auto &c : a.children) out.push_back(c.offset);
    }
    return out;
}

double
loss_depth_distortion(const BlendRecords &records) {
    if (records.pixels() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t p = 0; p < records.pixels(); ++p) {
        // sum_{j<i} w_j (z_i - z_j)^2 expanded with running prefix sums.
        double w_sum = 0.0, wz_sum = 0.0, wzz_sum = 0.0, pixel = 0.0;
        for (const auto &e : records.pixel(p)) {
            pixel += e.weight * (e.depth * e.depth * w_sum - 2.0 * e.depth * wz_sum + wzz_sum);
            w_sum += e.weight;
            wz_sum += e.weight * e.depth;
            wzz_sum += e.weight * e.depth * e.depth;
        }
        total += pixel;
    }
    return total / double(records.pixels());
}

Vec3
mean_mask_feature(const ImageD &features, const Mask &mask) {
    Vec3 sum       = Vec3::Zero();
    std::size_t n  = 0;
    for (std::size_t p = 0; p < mask.pixels(); ++p) {
        if (!mask.data()[p]) continue;
        sum += pixel_vec(features, p);
        ++n;
    }
    if (n == 0) throw Error(ErrorCode::InvalidInput, "mean over an empty mask");
    return sum / double(n);
}

ImageLoss
loss_intra_mask(const ImageD &features,
                const MaskSet &masks,
                std::optional<std::span<const Vec3>> frozen_means,
                double smoothing,
                bool per_mask_mean) {
    if (smoothing < 0.0) throw Error(ErrorCode::InvalidInput, "smoothing must be non-negative");
    ImageLoss out;
    out.gradient = ImageD(features.width(), features.height(), 3);
    const auto means = frozen_means ? std::vector<Vec3>(frozen_means->begin(), frozen_means->end())
                                    : mask_means(features, masks);
    for (std::size_t j = 0; j < masks.size(); ++j) {
        const auto &m      = masks[j];
        const double scale = per_mask_mean ? 1.0 / double(count_set(m)) : 1.0;
        for (std::size_t p = 0; p < m.pixels(); ++p) {
            if (!m.data()[p]) continue;
            const Vec3 r     = pixel_vec(features, p) - means[j];
            const double len = std::sqrt(r.squaredNorm() + smoothing * smoothing);
            out.value += scale * (len - smoothing);
            if (len > 0) add_pixel(out.gradient, p, scale * r / len);
        }
    }
    return out;
}

MeanLoss
loss_inter_mask(std::span<const Vec3> means) {
    MeanLoss out;
    out.gradient.assign(means.size(), Vec3::Zero());
    const std::size_t m = means.size();
    if (m < 2) return out;
    const double norm = 1.0 / (double(m) * double(m - 1));
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < m; ++k) {
            if (j == k) continue;
            const Vec3 d     = means[j] - means[k];
            const double len = d.norm();
            out.value += norm / (len + 1.0);
            if (len > 0) {
                // The (j, k) and (k, j) terms both depend on means[j].
                out.gradient[j] -= 2.0 * norm / ((len + 1.0) * (len + 1.0)) * d / len;
            }
        }
    }
    return out;
}

ImageLoss
loss_inter_mask_image(const ImageD &features, const MaskSet &masks) {
    ImageLoss out;
    out.gradient     = ImageD(features.width(), features.height(), 3);
    const auto means = mask_means(features, masks);
    const auto inter = loss_inter_mask(means);
    out.value        = inter.value;
    if (masks.size() < 2) return out;
    for (std::size_t j = 0; j < masks.size(); ++j) {
        const auto &m    = masks[j];
        const Vec3 share = inter.gradient[j] / double(count_set(m));
        for (std::size_t p = 0; p < m.pixels(); ++p) {
            if (m.data()[p]) add_pixel(out.gradient, p, share);
        }
    }
    return out;
}

ImageD
feature_map_from_records(const BlendRecords &records, const FeatureMatrix &features, int k, bool alpha_normalized) {
    ImageD out(records.width(), records.height(), 3);
    for (std::size_t p = 0; p < records.pixels(); ++p) {
        Vec3 acc     = Vec3::Zero();
        double alpha = 0.0;
        for (const auto &e : records.pixel(p)) {
            acc += e.weight * features.row(Eigen::Index(e.gaussian / std::uint32_t(k))).transpose();
            alpha += e.weight;
        }
        if (alpha_normalized) acc = alpha < kMinFeatureAlpha ? Vec3::Zero() : Vec3(acc / alpha);
        add_pixel(out, p, acc);
    }
    return out;
}

FeatureMatrix
backprop_to_anchors(const BlendRecords &records,
                    const ImageD &image_gradient,
                    std::size_t num_anchors,
                    int k,
                    std::vector<double> *child_signal,
                    bool alpha_normalized) {
    FeatureMatrix grad = FeatureMatrix::Zero(Eigen::Index(num_anchors), 3);
    std::vector<Vec3> child_grad;
    if (child_signal) child_grad.assign(child_signal->size(), Vec3::Zero());
    for (std::size_t p = 0; p < records.pixels(); ++p) {
        Vec3 g = pixel_vec(image_gradient, p);
        if (g.isZero(0.0)) continue;
        if (alpha_normalized) {
            double alpha = 0.0;
            for (const auto &e : records.pixel(p)) alpha += e.weight;
            if (alpha < kMinFeatureAlpha) continue;
            g /= alpha;
        }
        for (const auto &e : records.pixel(p)) {
            grad.row(Eigen::Index(e.gaussian / std::uint32_t(k))) += e.weight * g.transpose();
            if (child_signal) child_grad[e.gaussian] += e.weight * g;
        }
    }
    if (child_signal) {
        for (std::size_t c = 0; c < child_grad.size(); ++c) (*child_signal)[c] += child_grad[c].norm();
    }
    return grad;
}

LossReport
evaluate_losses(const Scene &scene, std::span<const TrainingView> views, const AnchorGraph *graph) {
    Scene copy = scene;
    std::optional<AnchorGraph> graph_copy;
    if (graph) graph_copy = *graph;
    Trainer trainer(copy, views, graph_copy ? &*graph_copy : nullptr, OptimizeOptions{});
    return trainer.evaluate(false, nullptr).report;
}

OptimizeResult
optimize_stage1(Scene &scene, std::span<const TrainingView> views, const OptimizeOptions &options) {
    Trainer trainer(scene, views, nullptr, options);
    return trainer.run();
}

OptimizeResult
optimize_stage2(Scene &scene,
                AnchorGraph &graph,
                std::span<const TrainingView> views,
                const OptimizeOptions &options) {
    if (graph.num_nodes() != scene.anchors.size()) {
        throw Error(ErrorCode::InvalidInput, "graph was built over a different anchor set");
    }
    Trainer trainer(scene, views, &graph, options);
    return trainer.run();
}

void
write_trajectory_csv(std::ostream &out, std::span<const TrajectoryPoint> trajectory) {
    const auto precision = out.precision(10);
    out << "iteration,L_in,L_d,L_is,L_ic,L_prop,total\n";
    for (const auto &p : trajectory) {
        out << p.iteration << ',' << p.losses.l_in << ',' << p.losses.l_d << ',' << p.losses.l_is << ','
            << p.losses.l_ic << ',' << p.losses.l_prop << ',' << p.losses.total << '\n';
    }
    out.precision(precision);
}

} // namespace agsplat
