#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "msrgan/metrics.hpp"
#include "msrgan/training.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace msrgan;
using namespace msrgan::test;

namespace {

BackboneConfig micro_backbone() {
    BackboneConfig cfg;
    cfg.growth_rate = 3;
    cfg.block_layers = {1, 1};
    cfg.stem_channels = 6;
    return cfg;
}

GeneratorConfig micro_generator(uint64_t seed = 3) {
    GeneratorConfig cfg;
    cfg.base_channels = 8;
    cfg.weights_seed = seed;
    return cfg;
}

DiscriminatorConfig micro_discriminator(uint64_t seed = 5) {
    DiscriminatorConfig cfg;
    cfg.widths = {4, 6, 8};
    cfg.extra_downsample = 2;  // capsules over 7x7 positions, fast
    cfg.weights_seed = seed;
    return cfg;
}

std::vector<ImageF> structured_images(int n, uint64_t seed) {
    Rng rng(seed);
    std::vector<ImageF> out;
    for (int k = 0; k < n; ++k) {
        ImageF img(224, 224);
        const real fx = rng.uniform(0.02, 0.2), fy = rng.uniform(0.02, 0.2);
        const real cx = rng.uniform(60, 160), cy = rng.uniform(60, 160);
        for (int y = 0; y < 224; ++y)
            for (int x = 0; x < 224; ++x) {
                real v = 0.45 + 0.25 * std::sin(x * fx) * std::cos(y * fy);
                const real dx = (x - cx) / 30.0, dy = (y - cy) / 30.0;
                v += 0.3 * std::exp(-(dx * dx + dy * dy));
                img.at(y, x) = std::clamp<real>(v, 0, 1);
            }
        out.push_back(std::move(img));
    }
    return out;
}

TrainConfig micro_train(int64_t steps, uint64_t seed = 11) {
    TrainConfig cfg;
    cfg.gen_batch = 2;
    cfg.disc_batch = 2;
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.checkpoint_every = 0;
    return cfg;
}

} // namespace

TEST_SUITE("losses") {
    TEST_CASE("content loss: zero at identity, additive across scales, separable") {
        Rng rng(1);
        Tensor t2 = random_tensor({1, 1, 56, 56}, rng, 0.4);
        Tensor t4 = random_tensor({1, 1, 112, 112}, rng, 0.4);
        Tensor t8 = random_tensor({1, 1, 224, 224}, rng, 0.4);
        MultiScaleVar out{Var::constant(t2), Var::constant(t4), Var::constant(t8)};

        ContentParts parts;
        const Var zero = content_loss(out, t2, t4, t8, {1, 1, 1}, &parts);
        CHECK(zero.value()[0] == 0.0);

        // target + 0.1 everywhere, unit weights -> 0.3
        Tensor s2 = t2, s4 = t4, s8 = t8;
        for (auto* t : {&s2, &s4, &s8})
            for (int64_t i = 0; i < t->size(); ++i) (*t)[i] += 0.1;
        MultiScaleVar shifted{Var::constant(s2), Var::constant(s4), Var::constant(s8)};
        const Var l = content_loss(shifted, t2, t4, t8, {1, 1, 1}, &parts);
        CHECK(l.value()[0] == doctest::Approx(0.3).epsilon(1e-9));
        CHECK(parts.c2 == doctest::Approx(0.1).epsilon(1e-9));

        // only sr8 differs -> independent of w2, w4
        MultiScaleVar only8{Var::constant(t2), Var::constant(t4), Var::constant(s8)};
        const Var a = content_loss(only8, t2, t4, t8, {1, 1, 1}, nullptr);
        const Var b = content_loss(only8, t2, t4, t8, {9, 7, 1}, nullptr);
        CHECK(a.value()[0] == doctest::Approx(b.value()[0]).epsilon(1e-12));
    }

    TEST_CASE("patch bce values") {
        const Var half = Var::constant(Tensor::full({1, 625}, 0.5));
        CHECK(patch_bce_loss(half, 1).value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        const Var p9 = Var::constant(Tensor::full({1, 625}, 0.9));
        CHECK(patch_bce_loss(p9, 1).value()[0] == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
        const Var exact = Var::constant(Tensor::full({1, 625}, 1.0));
        CHECK(patch_bce_loss(exact, 1).value()[0] <= 1.2e-7);
    }

    TEST_CASE("epsilon-clamped bce stays finite over 10000 random patch maps") {
        Rng rng(99);
        bool all_finite = true;
        for (int step = 0; step < 10000; ++step) {
            Tensor pred({1, 25});
            for (int64_t i = 0; i < pred.size(); ++i) {
                // include exact saturation values
                const real u = rng.uniform01();
                pred[i] = u < 0.1 ? real(0) : (u > 0.9 ? real(1) : rng.uniform01());
            }
            Var p = Var::param(pred);
            const Var l0 = patch_bce_loss(p, 0);
            const Var l1 = patch_bce_loss(p, 1);
            all_finite = all_finite && std::isfinite(l0.value()[0]) && std::isfinite(l1.value()[0]);
            p.zero_grad();
            backward(l1);
            for (int64_t i = 0; i < p.grad().size(); ++i)
                all_finite = all_finite && std::isfinite(p.grad()[i]);
            if (!all_finite) break;
        }
        CHECK(all_finite);
    }
}

TEST_SUITE("loader") {
    TEST_CASE("epoch permutation is seed-deterministic and wraps with reshuffle") {
        MemoryDataset data(structured_images(5, 2));
        SeededLoader a(data, 9), b(data, 9);
        for (int i = 0; i < 4; ++i) {
            const auto ba = a.next_batch(3);
            const auto bb = b.next_batch(3);
            for (int j = 0; j < 3; ++j) {
                CHECK(ba[size_t(j)].index == bb[size_t(j)].index);
                CHECK(ba[size_t(j)].flipped == bb[size_t(j)].flipped);
            }
        }
        // 12 draws from 5 samples: every index seen at least twice
        SeededLoader c(data, 9);
        std::map<size_t, int> seen;
        for (const auto& d : c.next_batch(12)) seen[d.index]++;
        CHECK(seen.size() == 5);
    }

    TEST_CASE("state round trip resumes the exact stream") {
        MemoryDataset data(structured_images(6, 3));
        SeededLoader a(data, 21);
        a.next_batch(7);
        const std::string state = a.state_json();

        SeededLoader b(data, 21);
        b.next_batch(7);
        b.restore_state(state);
        // no-op restore at the same point
        for (int i = 0; i < 3; ++i) {
            const auto ba = a.next_batch(4);
            const auto bb = b.next_batch(4);
            for (int j = 0; j < 4; ++j) {
                CHECK(ba[size_t(j)].index == bb[size_t(j)].index);
                CHECK(ba[size_t(j)].flipped == bb[size_t(j)].flipped);
            }
        }
    }

    TEST_CASE("flipped draws have mirrored pyramids") {
        MemoryDataset data(structured_images(1, 4));
        SeededLoader loader(data, 31);
        const ScalePyramid original = data.load(0);
        bool saw_flip = false, saw_plain = false;
        for (int i = 0; i < 32 && !(saw_flip && saw_plain); ++i) {
            const auto batch = loader.next_batch(1);
            if (batch[0].flipped) {
                saw_flip = true;
                CHECK(batch[0].pyramid.x8.at(0, 0) == original.x8.at(0, 223));
            } else {
                saw_plain = true;
                CHECK(batch[0].pyramid.x8.at(0, 0) == original.x8.at(0, 0));
            }
        }
        CHECK(saw_flip);
        CHECK(saw_plain);
    }
}

TEST_SUITE("train steps") {
    TEST_CASE("update partition: D step leaves generator and backbone untouched, G step vice versa") {
        auto backbone = std::make_shared<Backbone>(micro_backbone(), 7);
        Generator gen(micro_generator(), backbone);
        Discriminator disc(micro_discriminator());
        TrainingEngine engine(gen, disc, micro_train(10));

        MemoryDataset data(structured_images(4, 5));
        SeededLoader loader(data, 13);

        const std::string gen_before = params_checksum(gen.trainable_parameters());
        const std::string backbone_before = backbone->checksum();
        const real d_loss = engine.train_step_discriminator(loader.next_batch(2));
        CHECK(std::isfinite(d_loss));
        CHECK(params_checksum(gen.trainable_parameters()) == gen_before);
        CHECK(backbone->checksum() == backbone_before);

        const std::string disc_before = params_checksum(disc.parameters());
        ContentParts parts;
        const real g_loss = engine.train_step_generator(loader.next_batch(2), &parts);
        CHECK(std::isfinite(g_loss));
        CHECK(params_checksum(disc.parameters()) == disc_before);
        CHECK(backbone->checksum() == backbone_before);
        CHECK(parts.c8 > 0);

        // and generator params actually moved
        CHECK(params_checksum(gen.trainable_parameters()) != gen_before);
    }

    TEST_CASE("untrained nets start near 2 ln 2 discriminator loss") {
        auto backbone = std::make_shared<Backbone>(micro_backbone(), 7);
        Generator gen(micro_generator(17), backbone);
        Discriminator disc(micro_discriminator(19));
        TrainConfig cfg = micro_train(1);
        cfg.lr_d = 0;  // peek at the loss without moving
        TrainingEngine engine(gen, disc, cfg);
        MemoryDataset data(structured_images(4, 23));
        SeededLoader loader(data, 3);
        const real d_loss = engine.train_step_discriminator(loader.next_batch(2));
        CHECK(d_loss == doctest::Approx(2 * std::log(2.0)).epsilon(0.2));
    }

    TEST_CASE("discriminator loss decreases over a toy run") {
        auto backbone = std::make_shared<Backbone>(micro_backbone(), 7);
        Generator gen(micro_generator(211), backbone);
        Discriminator disc(micro_discriminator(223));
        TrainConfig cfg = micro_train(0);
        cfg.lr_d = 1e-3;
        cfg.lr_g = 0;  // hold the generator still; only D learns
        TrainingEngine engine(gen, disc, cfg);
        engine.set_feature_cache(true);

        MemoryDataset data(structured_images(4, 227));
        SeededLoader loader(data, 229);
        std::vector<real> losses;
        for (int step = 0; step < 60; ++step)
            losses.push_back(engine.train_step_discriminator(loader.next_batch(2)));
        real head = 0, tail = 0;
        for (int i = 0; i < 5; ++i) {
            head += losses[size_t(i)];
            tail += losses[losses.size() - 1 - size_t(i)];
        }
        CHECK(tail < head);
    }

    TEST_CASE("content regression decreases over a short toy run") {
        auto backbone = std::make_shared<Backbone>(micro_backbone(), 7);
        Generator gen(micro_generator(29), backbone);
        Discriminator disc(micro_discriminator(31));
        TrainConfig cfg = micro_train(0);
        cfg.w_adv = 0;  // pure content regression
        cfg.lr_g = 5e-4;
        TrainingEngine engine(gen, disc, cfg);
        engine.set_feature_cache(true);

        MemoryDataset data(structured_images(2, 37));
        SeededLoader loader(data, 41);
        real first = 0, last = 0;
        for (int step = 0; step < 60; ++step) {
            ContentParts parts;
            const real loss = engine.train_step_generator(loader.next_batch(2), &parts);
            if (step == 0) first = loss;
            last = loss;
        }
        CHECK(last < first);
    }
}

TEST_SUITE("run_training") {
    TEST_CASE("steps=0 checkpoints the initialization") {
        TempDir tmp("train0");
        auto backbone = std::make_shared<Backbone>(micro_backbone(), 7);
        Generator gen(micro_generator(43), backbone);
        const std::string init = params_checksum(gen.trainable_parameters());
        Discriminator disc(micro_discriminator(47));
        MemoryDataset data(structured_images(2, 53));
        const RunResult result = run_training(gen, disc, data, micro_train(0), tmp.str());
        CHECK(result.final_step == 0);
        CHECK(params_checksum(gen.trainable_parameters()) == init);
        CHECK(fs::exists(fs::path(result.checkpoint_dir) / "generator.ckpt"));
    }

    TEST_CASE("ledger serialization round trips") {
        LedgerRow row;
        row.step = 17;
        row.g_loss = 0.123456789012345;
        row.d_loss = 1.375;
        row.content8 = 0.25;
        row.gen_samples = 32;
        row.disc_real = 8;
        row.disc_fake = 8;
        const LedgerRow back = ledger_row_from_json(ledger_row_json(row));
        CHECK(back.step == row.step);
        CHECK(back.g_loss == row.g_loss);
        CHECK(back.d_loss == row.d_loss);
        CHECK(back.gen_samples == 32);
    }

    TEST_CASE("identical config and seed give bit-identical ledgers") {
        TempDir tmp1("det1"), tmp2("det2");
        MemoryDataset data(structured_images(3, 59));

        auto run_once = [&](const std::string& dir) {
            auto backbone = std::make_shared<Backbone>(micro_backbone(), 7);
            Generator gen(micro_generator(61), backbone);
            Discriminator disc(micro_discriminator(67));
            return run_training(gen, disc, data, micro_train(4, 71), dir);
        };
        const RunResult a = run_once(tmp1.str());
        const RunResult b = run_once(tmp2.str());
        REQUIRE(a.ledger.size() == b.ledger.size());
        for (size_t i = 0; i < a.ledger.size(); ++i)
            CHECK(ledger_row_json(a.ledger[i]) == ledger_row_json(b.ledger[i]));
    }

    TEST_CASE("interrupt and resume reproduces the uninterrupted ledger bit-exactly") {
        TempDir tmp_full("resume_full"), tmp_split("resume_split");
        MemoryDataset data(structured_images(3, 73));

        auto make_nets = [&]() {
            auto backbone = std::make_shared<Backbone>(micro_backbone(), 7);
            return std::pair<Generator, Discriminator>(Generator(micro_generator(79), backbone),
                                                       Discriminator(micro_discriminator(83)));
        };

        TrainConfig cfg = micro_train(6, 89);
        cfg.checkpoint_every = 2;

        auto [gen_f, disc_f] = make_nets();
        const RunResult full = run_training(gen_f, disc_f, data, cfg, tmp_full.str());

        // Run to step 4, then "crash" and resume in a fresh process-ish state.
        TrainConfig head = cfg;
        head.steps = 4;
        auto [gen_a, disc_a] = make_nets();
        run_training(gen_a, disc_a, data, head, tmp_split.str());

        auto [gen_b, disc_b] = make_nets();
        const RunResult resumed = run_training(gen_b, disc_b, data, cfg, tmp_split.str(), true);

        REQUIRE(full.ledger.size() == resumed.ledger.size());
        for (size_t i = 0; i < full.ledger.size(); ++i)
            CHECK(ledger_row_json(full.ledger[i]) == ledger_row_json(resumed.ledger[i]));
        CHECK(params_checksum(gen_f.trainable_parameters()) ==
              params_checksum(gen_b.trainable_parameters()));
        CHECK(params_checksum(disc_f.parameters()) == params_checksum(disc_b.parameters()));
    }

    TEST_CASE("asymmetric batch accounting lands in the ledger") {
        TempDir tmp("batches");
        auto backbone = std::make_shared<Backbone>(micro_backbone(), 7);
        Generator gen(micro_generator(97), backbone);
        Discriminator disc(micro_discriminator(101));
        MemoryDataset data(structured_images(2, 103));
        TrainConfig cfg = micro_train(2, 107);
        cfg.gen_batch = 4;
        cfg.disc_batch = 2;
        const RunResult result = run_training(gen, disc, data, cfg, tmp.str());
        for (const auto& row : result.ledger) {
            CHECK(row.gen_samples == 4);
            CHECK(row.disc_real == 2);
            CHECK(row.disc_fake == 2);
        }
    }

    TEST_CASE("non-finite loss raises NumericFailure and preserves the last checkpoint") {
        TempDir tmp("poison");
        auto backbone = std::make_shared<Backbone>(micro_backbone(), 7);
        Generator gen(micro_generator(161), backbone);
        Discriminator disc(micro_discriminator(163));
        MemoryDataset data(structured_images(2, 167));
        TrainConfig cfg = micro_train(4, 173);
        cfg.checkpoint_every = 1;

        // Poison a discriminator weight after step 2 via the step callback.
        int64_t seen = 0;
        CHECK_THROWS_AS(run_training(gen, disc, data, cfg, tmp.str(), false,
                                     [&](const LedgerRow& row) {
                                         seen = row.step;
                                         if (row.step == 2)
                                             disc.parameters()[0].var.value()[0] =
                                                 std::numeric_limits<real>::quiet_NaN();
                                     }),
                        NumericFailure);
        CHECK(seen == 2);
        CHECK(fs::exists(fs::path(tmp.str()) / "checkpoints" / "2" / "generator.ckpt"));
    }

    TEST_CASE("feature cache does not change the math") {
        MemoryDataset data(structured_images(2, 109));
        auto run_once = [&](bool cache) {
            auto backbone = std::make_shared<Backbone>(micro_backbone(), 7);
            Generator gen(micro_generator(113), backbone);
            Discriminator disc(micro_discriminator(127));
            TrainConfig cfg = micro_train(3, 131);
            cfg.feature_cache = cache;
            TempDir tmp(cache ? "cache_on" : "cache_off");
            return run_training(gen, disc, data, cfg, tmp.str()).ledger;
        };
        const auto with_cache = run_once(true);
        const auto without = run_once(false);
        REQUIRE(with_cache.size() == without.size());
        for (size_t i = 0; i < with_cache.size(); ++i)
            CHECK(ledger_row_json(with_cache[i]) == ledger_row_json(without[i]));
    }
}
