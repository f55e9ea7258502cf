#include "msrgan/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include <json.hpp>

#include "msrgan/pipeline.hpp"

using nlohmann::json;

namespace msrgan {

SrFunction sr_function_from(const Generator& gen) {
    return [&gen](const ImageF& lr) { return gen.forward(lr); };
}

SrFunction identity_sr_oracle(const std::vector<ImageF>& hr_images,
                              const std::vector<ImageF>& lr_inputs) {
    // Matches by LR content; exact because the pyramid LR is deterministic.
    auto table = std::make_shared<std::vector<std::pair<ImageF, ScalePyramid>>>();
    for (size_t i = 0; i < hr_images.size(); ++i) {
        ScalePyramid p = build_pyramid(hr_images[i]);
        table->emplace_back(i < lr_inputs.size() ? lr_inputs[i] : p.lr, std::move(p));
    }
    return [table](const ImageF& lr) -> MultiScaleOutput {
        for (const auto& [key, pyr] : *table) {
            if (key.pixels == lr.pixels) return {pyr.x2, pyr.x4, pyr.x8};
        }
        throw Error("identity oracle: unknown LR input");
    };
}

real tssa_ratio(real metric_gt, real metric_sr, MetricDirection direction) {
    if (direction == MetricDirection::higher_better) {
        if (metric_gt == 0) throw ZeroDenominator("ground-truth metric is zero");
        return metric_sr / metric_gt;
    }
    if (metric_sr == 0) throw ZeroDenominator("super-resolved metric is zero");
    return metric_gt / metric_sr;
}

TssaResult tssa(const ClinSigClassifier& classifier, const std::vector<LabeledCase>& gt_set,
                const std::vector<LabeledCase>& sr_set, MetricDirection direction) {
    if (gt_set.size() != sr_set.size())
        throw ShapeMismatch("tssa needs matched ground-truth and super-resolved case sets");
    TssaResult r;
    r.metric_gt = classifier.accuracy(gt_set);
    r.metric_sr = classifier.accuracy(sr_set);
    r.loss_gt = classifier.cross_entropy(gt_set);
    r.loss_sr = classifier.cross_entropy(sr_set);
    r.tssa = tssa_ratio(r.metric_gt, r.metric_sr, direction);
    return r;
}

std::vector<LabeledCase> super_resolve_cases(const SrFunction& sr,
                                             const std::vector<LabeledCase>& gt_set) {
    std::vector<LabeledCase> out;
    out.reserve(gt_set.size());
    for (const auto& c : gt_set) {
        const ScalePyramid p = build_pyramid(c.image);
        out.push_back({sr(p.lr).sr8, c.label});
    }
    return out;
}

MetricsReport evaluate_model(const SrFunction& sr, const std::vector<ImageF>& test_images,
                             const ClinSigClassifier* classifier,
                             const std::vector<LabeledCase>* classifier_test_set) {
    if (test_images.empty()) throw EmptyManifest("evaluation set is empty");

    MetricsReport report;
    report.n_images = int(test_images.size());
    real psnr_m = 0, ssim_m = 0, msssim_m = 0;
    real psnr_b = 0, ssim_b = 0, msssim_b = 0;

    for (const ImageF& hr : test_images) {
        const ScalePyramid pyr = build_pyramid(hr);
        const MultiScaleOutput out = sr(pyr.lr);
        ImageF bicubic = bicubic_upsample(pyr.lr, 8);
        for (real& v : bicubic.pixels) v = std::clamp(v, real(0), real(1));

        const real pm = psnr(out.sr8, pyr.x8);
        const real pb = psnr(bicubic, pyr.x8);
        report.per_image_psnr_model.push_back(pm);
        report.per_image_psnr_bicubic.push_back(pb);
        psnr_m += pm;
        psnr_b += pb;
        ssim_m += ssim(out.sr8, pyr.x8);
        ssim_b += ssim(bicubic, pyr.x8);
        msssim_m += ms_ssim(out.sr8, pyr.x8);
        msssim_b += ms_ssim(bicubic, pyr.x8);
    }
    const real n = real(test_images.size());
    report.model = {psnr_m / n, ssim_m / n, msssim_m / n};
    report.bicubic = {psnr_b / n, ssim_b / n, msssim_b / n};

    if (classifier && classifier_test_set && !classifier_test_set->empty()) {
        const std::vector<LabeledCase> sr_cases = super_resolve_cases(sr, *classifier_test_set);
        report.tssa = tssa(*classifier, *classifier_test_set, sr_cases);
        report.classifier_accuracy_gt = report.tssa->metric_gt;
        report.classifier_accuracy_sr = report.tssa->metric_sr;
    }
    return report;
}

namespace {

json counts_json(const ParamCounts& c) {
    return json{{"trainable", c.trainable}, {"non_trainable", c.non_trainable}, {"total", c.total}};
}

ParamCounts counts_from(const json& j) {
    return {j.at("trainable").get<int64_t>(), j.at("non_trainable").get<int64_t>(),
            j.at("total").get<int64_t>()};
}

} // namespace

std::string metrics_report_to_json(const MetricsReport& r) {
    json j;
    j["n_images"] = r.n_images;
    j["model"] = {{"psnr", r.model.psnr}, {"ssim", r.model.ssim}, {"ms_ssim", r.model.ms_ssim}};
    j["bicubic"] = {{"psnr", r.bicubic.psnr}, {"ssim", r.bicubic.ssim}, {"ms_ssim", r.bicubic.ms_ssim}};
    if (r.tssa) {
        j["tssa"] = {{"tssa", r.tssa->tssa},
                     {"accuracy_gt", r.tssa->metric_gt},
                     {"accuracy_sr", r.tssa->metric_sr},
                     {"loss_gt", r.tssa->loss_gt},
                     {"loss_sr", r.tssa->loss_sr}};
    }
    j["params"] = {{"generator", counts_json(r.generator_params)},
                   {"discriminator", counts_json(r.discriminator_params)}};
    j["per_image_psnr_model"] = r.per_image_psnr_model;
    j["per_image_psnr_bicubic"] = r.per_image_psnr_bicubic;
    return j.dump(2);
}

MetricsReport metrics_report_from_json(const std::string& text) {
    const json j = json::parse(text);
    MetricsReport r;
    r.n_images = j.at("n_images").get<int>();
    r.model = {j["model"]["psnr"].get<real>(), j["model"]["ssim"].get<real>(),
               j["model"]["ms_ssim"].get<real>()};
    r.bicubic = {j["bicubic"]["psnr"].get<real>(), j["bicubic"]["ssim"].get<real>(),
                 j["bicubic"]["ms_ssim"].get<real>()};
    if (j.contains("tssa")) {
        TssaResult t;
        t.tssa = j["tssa"]["tssa"].get<real>();
        t.metric_gt = j["tssa"]["accuracy_gt"].get<real>();
        t.metric_sr = j["tssa"]["accuracy_sr"].get<real>();
        t.loss_gt = j["tssa"]["loss_gt"].get<real>();
        t.loss_sr = j["tssa"]["loss_sr"].get<real>();
        r.tssa = t;
        r.classifier_accuracy_gt = t.metric_gt;
        r.classifier_accuracy_sr = t.metric_sr;
    }
    r.generator_params = counts_from(j["params"]["generator"]);
    r.discriminator_params = counts_from(j["params"]["discriminator"]);
    if (j.contains("per_image_psnr_model"))
        r.per_image_psnr_model = j["per_image_psnr_model"].get<std::vector<real>>();
    if (j.contains("per_image_psnr_bicubic"))
        r.per_image_psnr_bicubic = j["per_image_psnr_bicubic"].get<std::vector<real>>();
    return r;
}

std::string render_report_tables(const MetricsReport& r) {
    char buf[256];
    std::string out;
    out += "Similarity (8x SR, mean over " + std::to_string(r.n_images) + " images)\n";
    out += "Model            PSNR     SSIM     MS-SSIM\n";
    std::snprintf(buf, sizeof(buf), "%-16s %-8.2f %-8.3f %-8.3f\n", "Bicubic", double(r.bicubic.psnr),
                  double(r.bicubic.ssim), double(r.bicubic.ms_ssim));
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-16s %-8.2f %-8.3f %-8.3f\n", "Model", double(r.model.psnr),
                  double(r.model.ssim), double(r.model.ms_ssim));
    out += buf;

    if (r.tssa) {
        out += "\nTask-specific assessment (ClinSig classifier)\n";
        out += "Input            Loss     Accuracy TSSA\n";
        std::snprintf(buf, sizeof(buf), "%-16s %-8.2f %-8.0f %s\n", "Ground truth",
                      double(r.tssa->loss_gt), double(r.tssa->metric_gt * 100), "-");
        out += buf;
        std::snprintf(buf, sizeof(buf), "%-16s %-8.2f %-8.0f %.2f\n", "Super-resolved",
                      double(r.tssa->loss_sr), double(r.tssa->metric_sr * 100), double(r.tssa->tssa));
        out += buf;
    }

    out += "\nParameters\n";
    out += "Network          Trainable    Non-trainable  Total\n";
    std::snprintf(buf, sizeof(buf), "%-16s %-12lld %-14lld %lld\n", "Generator",
                  static_cast<long long>(r.generator_params.trainable),
                  static_cast<long long>(r.generator_params.non_trainable),
                  static_cast<long long>(r.generator_params.total));
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-16s %-12lld %-14lld %lld\n", "Discriminator",
                  static_cast<long long>(r.discriminator_params.trainable),
                  static_cast<long long>(r.discriminator_params.non_trainable),
                  static_cast<long long>(r.discriminator_params.total));
    out += buf;
    return out;
}

} // namespace msrgan
