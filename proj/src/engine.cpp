#include "rfs/engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rfs {

namespace {

// Flattens the four rotations of each image into rows 4i..4i+3.
Tensor rotated_batch(const std::vector<const Image*>& images) {
    const int n = images.front()->side;
    const int pixels = n * n;
    std::vector<double> data;
    data.reserve(images.size() * 4u * static_cast<std::size_t>(pixels));
    for (const Image* img : images) {
        for (int j = 0; j < 4; ++j) {
            const Image view = rotate90(*img, j);
            data.insert(data.end(), view.pixels.begin(), view.pixels.end());
        }
    }
    return Tensor::from({static_cast<int>(images.size()) * 4, pixels}, std::move(data), false);
}

std::string describe(const LossBreakdown& b) {
    std::ostringstream os;
    os << "new_cls=" << b.new_cls << " new_aug_cls=" << b.new_aug_cls << " new_ka=" << b.new_ka
       << " old_cls=" << b.old_cls << " old_feat_kd=" << b.old_feat_kd
       << " old_logit_kd=" << b.old_logit_kd << " total=" << b.total;
    return os.str();
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch", "must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("train.lr", "must be positive");
    if (alpha < 0.0) throw ConfigError("loss.alpha", "must be >= 0");
    if (kd_temperature <= 0.0) throw ConfigError("loss.kd_temperature", "must be positive");
    if (strategy.mgs_candidates < 1) throw ConfigError("mgs.K", "must be >= 1");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] < 1 || milestones[i] >= epochs)
            throw ConfigError("train.milestones", "must lie in [1, epochs)");
        if (i > 0 && milestones[i] <= milestones[i - 1])
            throw ConfigError("train.milestones", "must be strictly increasing");
    }
}

std::vector<int> augment_labels(const std::vector<int>& unified_labels, int classes_before,
                                int task_class_count) {
    std::vector<int> out;
    out.reserve(unified_labels.size() * 4);
    for (int y : unified_labels) {
        const int local = y - classes_before;
        if (local < 0 || local >= task_class_count)
            throw ProtocolError("augment_labels: label " + std::to_string(y) +
                                " outside the current task");
        for (int j = 0; j < 4; ++j) out.push_back(local * 4 + j);
    }
    return out;
}

Tensor aggregation_loss(const Tensor& aug_logits, const Tensor& unified_logits,
                        int classes_before, int task_class_count) {
    if (aug_logits.rows() != 4 * unified_logits.rows())
        throw ProtocolError("aggregation_loss: augmented batch must be 4x the base batch");
    const Tensor aggregated = aggregate_rotations(aug_logits, task_class_count);
    const Tensor restricted =
        slice_cols(unified_logits, classes_before, classes_before + task_class_count);
    return kl_divergence(aggregated, restricted);
}

Tensor feature_distill(const FeatureExtractor& live, const ModelSnapshot& snap,
                       const Tensor& rotated) {
    const Tensor live_f = live.forward(rotated);
    const Tensor snap_f = snap.features(rotated);  // frozen parameters, no gradient
    return l2_row_norm_mean(sub(live_f, snap_f));
}

Tensor logit_distill(const DualHead& live, const ModelSnapshot& snap,
                     const Tensor& compensated, double temperature) {
    const Tensor live_logits =
        slice_cols(live.unified_logits(compensated), 0, snap.seen_classes);
    const Tensor snap_logits = snap.unified_logits(compensated);
    return kl_divergence(live_logits, snap_logits, temperature);
}

Trainer::Trainer(Model& model, StatsStore& store, TrainConfig cfg, Rng& rng)
    : model_(model), store_(store), cfg_(std::move(cfg)), rng_(rng) {
    cfg_.validate();
}

LossBreakdown Trainer::train_step(const TaskBatchView& batch, int task_index,
                                  int classes_before, int task_class_count,
                                  const ModelSnapshot* snap, AdamState& opt, double lr,
                                  long* zero_norm_pairs) {
    const int b = static_cast<int>(batch.images.size());
    const int seen = model_.head.seen_classes;

    const Tensor x_rot = rotated_batch(batch.images);
    const Tensor f_rot = model_.extractor.forward(x_rot);  // [4b x m]
    std::vector<int> zero_rows(b);
    for (int i = 0; i < b; ++i) zero_rows[i] = 4 * i;
    const Tensor f0 = gather_rows(f_rot, zero_rows);  // [b x m], the 0-degree views

    // New-class block: unified CE over all seen classes, augmented CE over
    // the rotated label space, and the aggregation KL tying the two heads.
    const Tensor unified_new = model_.head.unified_logits(f0);
    const Tensor loss_new_cls = cross_entropy(unified_new, batch.labels);
    const Tensor aug_logits = model_.head.aug_logits(f_rot);
    const std::vector<int> y_aug = augment_labels(batch.labels, classes_before, task_class_count);
    const Tensor loss_new_aug = cross_entropy(aug_logits, y_aug);
    const Tensor loss_new_ka =
        aggregation_loss(aug_logits, unified_new, classes_before, task_class_count);

    std::vector<Tensor> terms = {loss_new_cls, loss_new_aug, loss_new_ka};
    std::vector<double> weights = {1.0, 1.0, 1.0};

    LossBreakdown out;
    out.new_cls = loss_new_cls.value();
    out.new_aug_cls = loss_new_aug.value();
    out.new_ka = loss_new_ka.value();

    if (task_index >= 1 && classes_before > 0) {
        // Draw order per step: old-class selection, then generation (MGS
        // candidates), then compensation randomness.
        std::vector<int> old_pool(classes_before);
        for (int i = 0; i < classes_before; ++i) old_pool[i] = i;
        const std::vector<int> y_old = select_old_batch(old_pool, b, rng_);

        StrategyConfig strat = cfg_.strategy;
        const GeneratedBatch gen = generate(strat, store_, y_old, seen, rng_);
        const Tensor f_rot_const = f_rot.detach_copy();  // synthesis never reaches the extractor
        const SynthesisBatch synth =
            compensate(strat, gen.features, gen.labels, f_rot_const, rng_);
        if (zero_norm_pairs) *zero_norm_pairs += synth.zero_norm_pairs;

        if (cfg_.compute_old_loss) {
            const Tensor unified_old = model_.head.unified_logits(synth.compensated);
            const Tensor loss_old_cls = gen.soft_targets
                                            ? cross_entropy_soft(unified_old, *gen.soft_targets)
                                            : cross_entropy(unified_old, synth.labels);
            out.old_cls = loss_old_cls.value();
            terms.push_back(loss_old_cls);
            weights.push_back(cfg_.alpha);

            if (cfg_.feature_kd) {
                if (!snap) throw ProtocolError("train_step: missing snapshot at task >= 1");
                // Same values as feature_distill, reusing the live forward pass.
                const Tensor loss_feat = l2_row_norm_mean(sub(f_rot, snap->features(x_rot)));
                out.old_feat_kd = loss_feat.value();
                terms.push_back(loss_feat);
                weights.push_back(cfg_.alpha);
            }
            if (cfg_.logit_kd) {
                if (!snap) throw ProtocolError("train_step: missing snapshot at task >= 1");
                const Tensor loss_logit = logit_distill(model_.head, *snap, synth.compensated,
                                                        cfg_.kd_temperature);
                out.old_logit_kd = loss_logit.value();
                terms.push_back(loss_logit);
                weights.push_back(cfg_.alpha);
            }
        }
    }

    const Tensor total = weighted_sum(terms, weights);
    out.total = total.value();
    if (!std::isfinite(out.total))
        throw NanAbortError("train_step: non-finite loss at task " + std::to_string(task_index) +
                            ": " + describe(out));

    opt.zero_grad();
    total.backward();
    opt.step(lr);
    return out;
}

std::vector<EpochLog> Trainer::train_task(int task_index, const TaskBatchView& train,
                                          int classes_before, int task_class_count,
                                          const ModelSnapshot* snap) {
    if (model_.head.seen_classes != classes_before + task_class_count)
        throw ProtocolError("train_task: unified head not expanded for this task");
    if (model_.head.current_task_classes != task_class_count)
        throw ProtocolError("train_task: augmented head not sized for this task");
    if (task_index >= 1 && snap == nullptr)
        throw ProtocolError("train_task: snapshot required for incremental tasks");
    if (train.images.size() != train.labels.size() || train.images.empty())
        throw ProtocolError("train_task: empty or inconsistent task data");

    AdamConfig acfg;
    acfg.learning_rate = cfg_.learning_rate;
    acfg.beta1 = cfg_.beta1;
    acfg.beta2 = cfg_.beta2;
    acfg.weight_decay = cfg_.weight_decay;
    acfg.epsilon = cfg_.adam_epsilon;
    AdamState opt(model_.parameters(), acfg);

    const int count = static_cast<int>(train.images.size());
    std::vector<int> order(count);
    for (int i = 0; i < count; ++i) order[i] = i;

    std::vector<EpochLog> logs;
    logs.reserve(cfg_.epochs);
    double lr = cfg_.learning_rate;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        if (std::find(cfg_.milestones.begin(), cfg_.milestones.end(), epoch) !=
            cfg_.milestones.end())
            lr *= cfg_.lr_decay;

        rng_.shuffle(order);

        EpochLog log;
        log.epoch = epoch;
        log.learning_rate = lr;
        for (int start = 0; start < count; start += cfg_.batch_size) {
            const int end = std::min(count, start + cfg_.batch_size);
            TaskBatchView batch;
            batch.images.reserve(end - start);
            batch.labels.reserve(end - start);
            for (int i = start; i < end; ++i) {
                batch.images.push_back(train.images[order[i]]);
                batch.labels.push_back(train.labels[order[i]]);
            }
            const LossBreakdown step =
                train_step(batch, task_index, classes_before, task_class_count, snap, opt, lr,
                           &log.zero_norm_pairs);
            log.mean.new_cls += step.new_cls;
            log.mean.new_aug_cls += step.new_aug_cls;
            log.mean.new_ka += step.new_ka;
            log.mean.old_cls += step.old_cls;
            log.mean.old_feat_kd += step.old_feat_kd;
            log.mean.old_logit_kd += step.old_logit_kd;
            log.mean.total += step.total;
            ++log.steps;
        }
        if (log.steps > 0) {
            log.mean.new_cls /= log.steps;
            log.mean.new_aug_cls /= log.steps;
            log.mean.new_ka /= log.steps;
            log.mean.old_cls /= log.steps;
            log.mean.old_feat_kd /= log.steps;
            log.mean.old_logit_kd /= log.steps;
            log.mean.total /= log.steps;
        }
        logs.push_back(std::move(log));
    }
    return logs;
}

void Trainer::finalize_task(int task_index, const TaskBatchView& train, int classes_before,
                            int task_class_count) {
    for (int c = classes_before; c < classes_before + task_class_count; ++c) {
        std::vector<const Image*> class_images;
        for (std::size_t i = 0; i < train.labels.size(); ++i)
            if (train.labels[i] == c) class_images.push_back(train.images[i]);
        if (class_images.size() < 2)
            throw InsufficientSampleError("finalize_task: class " + std::to_string(c) +
                                          " has fewer than 2 training samples");
        const Tensor x = Model::batch_from_images(class_images);
        const Tensor features = model_.extractor.forward(x).detach_copy();
        store_.insert(estimate_class_stats(features, c, task_index));
    }
}

EvalResult Trainer::evaluate(const std::vector<TaskBatchView>& per_task_test) const {
    const int seen = model_.head.seen_classes;
    EvalResult result;
    result.confusion.assign(static_cast<std::size_t>(seen) * seen, 0);

    constexpr int kEvalBatch = 256;
    for (const TaskBatchView& task : per_task_test) {
        long correct = 0;
        const int count = static_cast<int>(task.images.size());
        for (int start = 0; start < count; start += kEvalBatch) {
            const int end = std::min(count, start + kEvalBatch);
            std::vector<const Image*> chunk(task.images.begin() + start,
                                            task.images.begin() + end);
            const Tensor x = Model::batch_from_images(chunk);
            const Tensor logits = model_.head.unified_logits(model_.extractor.forward(x));
            const std::vector<int> pred = argmax_rows(logits);
            for (int i = 0; i < end - start; ++i) {
                const int truth = task.labels[start + i];
                if (truth < 0 || truth >= seen)
                    throw ProtocolError("evaluate: label outside the seen classes");
                if (pred[i] == truth) ++correct;
                ++result.confusion[static_cast<std::size_t>(truth) * seen + pred[i]];
            }
        }
        result.per_task.emplace_back(correct, count);
        result.correct += correct;
        result.total += count;
    }
    return result;
}

}  // namespace rfs
