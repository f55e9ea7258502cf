#include "msrgan/classifier.hpp"

#include <cmath>

#include "msrgan/checkpoint.hpp"

namespace msrgan {

ClinSigClassifier::ClinSigClassifier(const ClassifierConfig& cfg) : cfg_(cfg) {
    if (cfg_.widths.size() != 4) throw Error("classifier needs exactly four stage widths");
    Rng rng(cfg_.weights_seed);
    int ch = 1;
    for (size_t i = 0; i < cfg_.widths.size(); ++i) {
        stages_.emplace_back(ch, cfg_.widths[i], 3, 2, 1, rng, "stage" + std::to_string(i), params_);
        ch = cfg_.widths[i];
    }
    head_ = Linear(ch, 1, rng, "head", params_);
}

Var ClinSigClassifier::forward(const Var& batch) const {
    Var h = batch;
    for (const Conv2d& stage : stages_) h = leaky_relu(stage(h), cfg_.leaky_slope);
    return sigmoid(linear(global_avg_pool(h), head_.w, head_.b));
}

real ClinSigClassifier::predict(const ImageF& img) const {
    const Var p = forward(Var::constant(tensor_from_image(img)));
    return p.value()[0];
}

real ClinSigClassifier::accuracy(const std::vector<LabeledCase>& cases) const {
    if (cases.empty()) throw EmptyManifest("classifier evaluation set is empty");
    int correct = 0;
    for (const auto& c : cases) {
        const bool pred = predict(c.image) >= real(0.5);
        if (pred == c.label) ++correct;
    }
    return real(correct) / real(cases.size());
}

real ClinSigClassifier::cross_entropy(const std::vector<LabeledCase>& cases) const {
    if (cases.empty()) throw EmptyManifest("classifier evaluation set is empty");
    constexpr real eps = 1e-7;
    real acc = 0;
    for (const auto& c : cases) {
        const real p = std::clamp(predict(c.image), eps, real(1) - eps);
        acc += c.label ? -std::log(p) : -std::log(real(1) - p);
    }
    return acc / real(cases.size());
}

void ClinSigClassifier::save(const std::string& path) const {
    CheckpointArchive archive;
    for (const auto& p : params_) archive.tensors.emplace_back(p.name, p.var.value());
    archive.meta["kind"] = "clinsig_classifier";
    save_checkpoint(path, archive);
}

void ClinSigClassifier::load(const std::string& path) {
    const CheckpointArchive archive = load_checkpoint(path);
    if (archive.meta.count("kind") && archive.meta.at("kind") != "clinsig_classifier")
        throw CheckpointMismatch("not a classifier checkpoint: " + path);
    for (auto& p : params_) {
        const Tensor* t = archive.find(p.name);
        if (!t || !t->same_shape(p.var.value()))
            throw CheckpointMismatch("classifier parameter missing or reshaped: " + p.name);
        p.var.value() = *t;
    }
}

ClassifierFit train_clinsig_classifier(ClinSigClassifier& net,
                                       const std::vector<LabeledCase>& train_set,
                                       const std::vector<LabeledCase>& test_set,
                                       const ClassifierTrainConfig& cfg) {
    if (train_set.empty() || test_set.empty())
        throw EmptyManifest("classifier training needs non-empty train and test splits");

    Adam adam(net.parameters(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
    Rng rng(cfg.seed);
    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    ClassifierFit fit;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
            const size_t end = std::min(order.size(), start + size_t(cfg.batch));
            std::vector<ImageF> imgs;
            Tensor targets({int(end - start), 1});
            imgs.reserve(end - start);
            for (size_t i = start; i < end; ++i) {
                imgs.push_back(train_set[order[i]].image);
                targets[int64_t(i - start)] = train_set[order[i]].label ? 1 : 0;
            }
            const Var pred = net.forward(Var::constant(batch_from_images(imgs)));
            const Var loss = bce_mean_targets(pred, targets);
            fit.train_loss_final = loss.value()[0];

            adam.zero_grad();
            backward(loss);
            adam.step();
        }
    }
    fit.test_accuracy = net.accuracy(test_set);
    fit.test_loss = net.cross_entropy(test_set);
    return fit;
}

} // namespace msrgan
