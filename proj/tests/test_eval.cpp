#include <doctest.h>

#include <cmath>
#include <limits>

#include "uinr/errors.hpp"
#include "uinr/eval.hpp"
#include "uinr/rng.hpp"

using namespace uinr;

namespace {

VolumeGrid random_volume(Dims dims, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    std::vector<double> vals(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
    for (auto& v : vals) v = rng.uniform(lo, hi);
    return VolumeGrid(dims, std::move(vals));
}

VolumeGrid shifted(const VolumeGrid& vol, double offset) {
    std::vector<double> vals = vol.values();
    for (auto& v : vals) v += offset;
    return VolumeGrid(vol.dims(), std::move(vals), vol.spacing());
}

VolumeGrid constant(Dims dims, double value) {
    return VolumeGrid(dims, std::vector<double>(
                                static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], value));
}

}  // namespace

TEST_CASE("psnr sentinel and constant-offset spot values") {
    VolumeGrid gt = random_volume({6, 5, 4}, 1);
    CHECK(std::isinf(psnr(gt, gt)));
    // A uniform offset makes RMSE equal to the offset.
    const double range = gt.max_value() - gt.min_value();
    const double off20 = range / std::pow(10.0, 20.0 / 20.0);
    CHECK(psnr(gt, shifted(gt, off20)) == doctest::Approx(20.0).epsilon(1e-9));
    const double off40 = range / std::pow(10.0, 40.0 / 20.0);
    CHECK(psnr(gt, shifted(gt, off40)) == doctest::Approx(40.0).epsilon(1e-9));
    CHECK_THROWS_AS(psnr(gt, random_volume({6, 5, 3}, 2)), UsageError);
}

TEST_CASE("psnr is invariant under a common affine rescale") {
    VolumeGrid gt = random_volume({5, 5, 5}, 3);
    VolumeGrid pred = shifted(gt, 0.0);
    {
        // Perturb the prediction a little so the PSNR is finite.
        std::vector<double> vals = pred.values();
        Rng rng(4);
        for (auto& v : vals) v += rng.uniform(-0.01, 0.01);
        pred = VolumeGrid(gt.dims(), std::move(vals));
    }
    auto rescale = [](const VolumeGrid& v, double a, double b) {
        std::vector<double> vals = v.values();
        for (auto& x : vals) x = a * x + b;
        return VolumeGrid(v.dims(), std::move(vals));
    };
    const double base = psnr(gt, pred);
    CHECK(psnr(rescale(gt, 3.0, 5.0), rescale(pred, 3.0, 5.0)) ==
          doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("corr_fields extremes and degeneracy") {
    VolumeGrid a = random_volume({4, 4, 4}, 5);
    std::vector<double> neg = a.values();
    for (auto& v : neg) v = -2.0 * v + 1.0;
    CHECK(corr_fields(a, a) == doctest::Approx(1.0));
    CHECK(corr_fields(a, VolumeGrid(a.dims(), std::move(neg))) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(corr_fields(a, constant(a.dims(), 2.0)), UsageError);
    CHECK_THROWS_AS(corr_fields(constant(a.dims(), 2.0), a), UsageError);
}

TEST_CASE("error fields") {
    VolumeGrid gt = random_volume({4, 3, 2}, 6);
    VolumeGrid pred = random_volume({4, 3, 2}, 7);
    VolumeGrid ae = abs_error_field(gt, pred);
    VolumeGrid se = squared_error_field(gt, pred);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        CHECK(ae.values()[i] >= 0.0);
        CHECK(se.values()[i] == doctest::Approx(ae.values()[i] * ae.values()[i]));
    }
}

TEST_CASE("gaussian field NLL stationarity and clamping") {
    VolumeGrid gt = random_volume({4, 4, 4}, 8);
    // mu == gt with var = 1/(2*pi) zeroes the NLL exactly.
    CHECK(nll_gaussian_field(gt, gt, constant(gt.dims(), 1.0 / (2.0 * M_PI))) ==
          doctest::Approx(0.0).epsilon(1e-12));

    // For fixed residuals, var = r^2 minimizes the per-voxel NLL.
    VolumeGrid mean = shifted(gt, 0.2);
    VolumeGrid opt = constant(gt.dims(), 0.04);
    const double at_opt = nll_gaussian_field(gt, mean, opt);
    CHECK(at_opt < nll_gaussian_field(gt, mean, constant(gt.dims(), 0.08)));
    CHECK(at_opt < nll_gaussian_field(gt, mean, constant(gt.dims(), 0.02)));

    long clamped = -1;
    nll_gaussian_field(gt, mean, constant(gt.dims(), 0.0), &clamped);
    CHECK(clamped == 64);
    nll_gaussian_field(gt, mean, opt, &clamped);
    CHECK(clamped == 0);
}

TEST_CASE("evaluate produces a coherent report") {
    VolumeGrid gt = random_volume({8, 8, 8}, 9);
    VolumeGrid mean = shifted(gt, 0.01);
    VolumeGrid au = random_volume({8, 8, 8}, 10, 0.01, 0.2);
    VolumeGrid eu = random_volume({8, 8, 8}, 11, 0.01, 0.2);
    EvalReport rep = evaluate(gt, mean, au, eu, {2, 2, 2}, {4, 4, 4});
    CHECK(std::isfinite(rep.psnr_db));
    CHECK(rep.corr_eu_error >= -1.0);
    CHECK(rep.corr_eu_error <= 1.0);
    CHECK(rep.clamped_eu == 0);

    // EU proportional to the absolute error maximizes the EU correlation. The
    // perturbation must vary per voxel or the error field degenerates to a constant.
    Rng rng(12);
    std::vector<double> mv = gt.values();
    for (auto& x : mv) x += rng.uniform(-0.05, 0.05);
    VolumeGrid noisy_mean(gt.dims(), std::move(mv));
    std::vector<double> v = abs_error_field(gt, noisy_mean).values();
    for (auto& x : v) x = 2.0 * x + 0.001;
    EvalReport aligned = evaluate(gt, noisy_mean, au, VolumeGrid(gt.dims(), std::move(v)),
                                  {2, 2, 2}, {4, 4, 4});
    CHECK(aligned.corr_eu_error == doctest::Approx(1.0));
    // The squared-error reference changes the target field, not its sign.
    EvalReport sq = evaluate(gt, mean, au, eu, {2, 2, 2}, {4, 4, 4}, true);
    CHECK(std::isfinite(sq.corr_eu_error));
}

TEST_CASE("eval report round-trips through json and csv stays aligned") {
    EvalReport rep;
    rep.psnr_db = 42.5;
    rep.corr_eu_error = 0.445;
    rep.corr_au_locvar = 0.889;
    rep.corr_au_interp = 0.73;
    rep.nll_eu = -1.25;
    rep.nll_au = -0.5;
    rep.clamped_eu = 3;
    rep.reconstruction_seconds = 1.5;
    rep.config_echo = {{"variant", "rev"}};
    const EvalReport back = EvalReport::from_json(rep.to_json());
    CHECK(back.psnr_db == rep.psnr_db);
    CHECK(back.corr_au_interp == rep.corr_au_interp);
    CHECK(back.clamped_eu == 3);
    CHECK(back.config_echo.at("variant") == "rev");

    rep.psnr_db = std::numeric_limits<double>::infinity();
    CHECK(rep.to_json().at("psnr_db") == "exact");
    CHECK(std::isinf(EvalReport::from_json(rep.to_json()).psnr_db));
    const std::string row = rep.csv_row();
    CHECK(row.substr(0, 5) == "exact");
    const auto commas = [](const std::string& s) {
        long n = 0;
        for (char c : s) n += c == ',';
        return n;
    };
    CHECK(commas(row) == commas(EvalReport::csv_header()));
}

TEST_CASE("ablation deltas") {
    EvalReport a;
    a.psnr_db = 78.06;
    a.corr_eu_error = 0.445;
    a.corr_au_locvar = 0.889;
    a.corr_au_interp = 0.73;
    EvalReport b;
    b.psnr_db = 78.83;
    b.corr_eu_error = 0.317;
    b.corr_au_locvar = 0.781;
    b.corr_au_interp = 0.62;

    const AblationDeltas same = ablation_compare(a, a);
    for (const auto& [k, v] : same.deltas) CHECK(v == 0.0);
    CHECK_FALSE(same.regularized_dominates);

    const AblationDeltas d = ablation_compare(a, b);
    CHECK(d.deltas.at("corr_eu_error") == doctest::Approx(0.128));
    CHECK(d.deltas.at("psnr_db") == doctest::Approx(-0.77));
    CHECK(d.regularized_dominates);

    EvalReport c = b;
    c.config_echo = {{"variant", "rev"}, {"weights", {{"lambda2", 0.0}}}};
    EvalReport e = a;
    e.config_echo = {{"variant", "det"}, {"weights", {{"lambda2", 0.1}}}};
    CHECK_THROWS_AS(ablation_compare(e, c), UsageError);
}
