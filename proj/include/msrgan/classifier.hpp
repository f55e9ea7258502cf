#pragma once

#include <string>
#include <vector>

#include "msrgan/nn.hpp"
#include "msrgan/tensor_image.hpp"

namespace msrgan {

/// One labeled 224x224 case for ClinSig training/evaluation.
struct LabeledCase {
    ImageF image;
    bool label = false;
};

struct ClassifierConfig {
    std::vector<int> widths = {8, 16, 32, 64};  // four stride-2 stages
    real leaky_slope = 0.2;
    uint64_t weights_seed = 0;
};

struct ClassifierTrainConfig {
    int epochs = 10;
    int batch = 16;
    real lr = 1e-3;
    real adam_beta1 = 0.9;
    real adam_beta2 = 0.999;
    uint64_t seed = 0;
};

/// Small convolutional ClinSig classifier: four stride-2 conv stages, global
/// average pooling, one logistic output. Trained only on ground-truth scans;
/// super-resolved images are strictly evaluation inputs.
class ClinSigClassifier {
public:
    explicit ClinSigClassifier(const ClassifierConfig& cfg = {});

    Var forward(const Var& batch) const;  // [B,1,224,224] -> [B,1] probability
    real predict(const ImageF& img) const;

    real accuracy(const std::vector<LabeledCase>& cases) const;
    /// Mean binary cross-entropy, the "test loss" column of the report.
    real cross_entropy(const std::vector<LabeledCase>& cases) const;

    ParamList& parameters() { return params_; }
    const ParamList& parameters() const { return params_; }
    const ClassifierConfig& config() const { return cfg_; }

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    ClassifierConfig cfg_;
    ParamList params_;
    std::vector<Conv2d> stages_;
    Linear head_;
};

struct ClassifierFit {
    real train_loss_final = 0;
    real test_accuracy = 0;
    real test_loss = 0;
};

/// Trains on the "train" split and reports held-out accuracy on the "test"
/// split. Throws EmptyManifest when either split is empty.
ClassifierFit train_clinsig_classifier(ClinSigClassifier& net,
                                       const std::vector<LabeledCase>& train_set,
                                       const std::vector<LabeledCase>& test_set,
                                       const ClassifierTrainConfig& cfg);

} // namespace msrgan
