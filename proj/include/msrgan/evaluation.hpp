#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msrgan/classifier.hpp"
#include "msrgan/generator.hpp"
#include "msrgan/metrics.hpp"
#include "msrgan/nn.hpp"

namespace msrgan {

/// Any super-resolution operator under evaluation: 28x28 in, three scales
/// out. Stubs (identity oracle, degradation) plug in alongside real
/// generators.
using SrFunction = std::function<MultiScaleOutput(const ImageF& lr)>;

SrFunction sr_function_from(const Generator& gen);
/// Oracle stub that returns the pyramid levels of the ground truth it was
/// built from; used to pin metric upper bounds.
SrFunction identity_sr_oracle(const std::vector<ImageF>& hr_images, const std::vector<ImageF>& lr_inputs);

enum class MetricDirection { higher_better, lower_better };

/// Direction-aware performance ratio: 1 means the SR operator is harmless
/// to the downstream task, below 1 degradation, above 1 (rare) improvement.
/// Higher-is-better metrics use m_sr / m_gt; lower-is-better m_gt / m_sr.
/// Throws ZeroDenominator.
real tssa_ratio(real metric_gt, real metric_sr, MetricDirection direction);

struct TssaResult {
    real tssa = 0;
    real metric_gt = 0;
    real metric_sr = 0;
    real loss_gt = 0;  // classifier cross-entropy, reported but not ratioed
    real loss_sr = 0;
};

/// Task-specific similarity assessment over matched case sets: the
/// classifier (trained on ground truth only) is scored on both sets and the
/// direction-aware ratio returned. Uses accuracy as the metric.
TssaResult tssa(const ClinSigClassifier& classifier, const std::vector<LabeledCase>& gt_set,
                const std::vector<LabeledCase>& sr_set,
                MetricDirection direction = MetricDirection::higher_better);

/// Applies an SR operator to the downsampled ground truth of each case,
/// producing the matched sr_set for tssa().
std::vector<LabeledCase> super_resolve_cases(const SrFunction& sr,
                                             const std::vector<LabeledCase>& gt_set);

struct ModelMetricsRow {
    real psnr = 0;
    real ssim = 0;
    real ms_ssim = 0;
};

struct MetricsReport {
    ModelMetricsRow model;
    ModelMetricsRow bicubic;
    int n_images = 0;

    std::optional<TssaResult> tssa;
    std::optional<real> classifier_accuracy_gt;
    std::optional<real> classifier_accuracy_sr;

    ParamCounts generator_params;
    ParamCounts discriminator_params;

    /// Per-image PSNR of model and bicubic, for distribution plots.
    std::vector<real> per_image_psnr_model;
    std::vector<real> per_image_psnr_bicubic;
};

std::string metrics_report_to_json(const MetricsReport& report);
MetricsReport metrics_report_from_json(const std::string& text);
/// Aligned-text comparison tables (similarity, task assessment, parameters).
std::string render_report_tables(const MetricsReport& report);

/// Evaluates an SR operator against ground-truth 224x224 images: per-image
/// sr8-vs-truth metrics plus the bicubic baseline, aggregated as means.
/// Throws EmptyManifest on an empty evaluation set.
MetricsReport evaluate_model(const SrFunction& sr, const std::vector<ImageF>& test_images,
                             const ClinSigClassifier* classifier = nullptr,
                             const std::vector<LabeledCase>* classifier_test_set = nullptr);

} // namespace msrgan
