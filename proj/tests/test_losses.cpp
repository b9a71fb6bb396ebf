#include <catch2/catch_amalgamated.hpp>

#include "freegan/losses.hpp"
#include "testutil.hpp"

using namespace freegan;
using testutil::grad_check;

namespace {

SpectralConfig small_cfg() {
    SpectralConfig c;
    c.sample_rate_hz = 800;
    c.frame_len = 8;
    c.frame_shift = 4;
    c.fft_size = 8;  // n_freq = 5
    c.mel_bins = 3;
    return c;
}

Spectrogram random_phase_spec(int F, int N, uint64_t seed, const SpectralConfig& cfg) {
    Spectrogram p(F, N, SpecDomain::Phase, cfg);
    Rng rng(seed);
    for (auto& v : p.data) v = (rng.uniform() * 2.0 - 1.0) * kPi * 0.98;
    return p;
}

// Triple-nested-loop reference for one FWAW term, written directly from the
// weighted-mean definition with explicit edge-replicated differences.
real oracle_fwaw(const Spectrogram& ph, const Spectrogram& pt, real rho, int theta) {
    const int F = ph.frames, N = ph.bins;
    auto diff = [&](const Spectrogram& s, int f, int n) -> real {
        if (theta == 0) return s.at(f, n);
        if (theta == 1) {  // frequency
            if (n == N - 1) return s.at(f, N - 1) - s.at(f, N - 2);
            return s.at(f, n + 1) - s.at(f, n);
        }
        if (f == F - 1) return s.at(F - 1, n) - s.at(F - 2, n);
        return s.at(f + 1, n) - s.at(f, n);
    };
    real acc = 0.0;
    for (int f = 0; f < F; ++f)
        for (int n = 0; n < N; ++n) {
            const real x = diff(ph, f, n) - diff(pt, f, n);
            const real aw = std::abs(x - kTwoPi * std::round(x / kTwoPi));
            acc += aw * std::pow(rho, static_cast<real>(n) / (N - 1));
        }
    return acc / static_cast<real>(F * N);
}

}  // namespace

TEST_CASE("fwaw_weights endpoints, midpoint, and degenerate cases") {
    const FwawWeights wt = fwaw_weights(513, 2.5);
    REQUIRE(wt.w.size() == 513);
    REQUIRE(wt.w[0] == 1.0);
    REQUIRE(wt.w[512] == 2.5);
    REQUIRE(wt.w[256] == Catch::Approx(std::sqrt(2.5)).epsilon(1e-12));
    for (size_t i = 1; i < wt.w.size(); ++i) REQUIRE(wt.w[i] > wt.w[i - 1]);

    const FwawWeights flat = fwaw_weights(16, 1.0);
    for (real v : flat.w) REQUIRE(v == 1.0);

    REQUIRE_THROWS_AS(fwaw_weights(16, 0.0), DomainError);
    REQUIRE_THROWS_AS(fwaw_weights(16, -1.0), DomainError);
    REQUIRE_THROWS_AS(fwaw_weights(1, 2.0), InvalidInput);
}

TEST_CASE("fwaw_phase_loss: zeros, wrap invariance, and the nested-loop oracle") {
    const SpectralConfig cfg = small_cfg();
    const Spectrogram p = random_phase_spec(3, 5, 77, cfg);
    const FwawWeights wt = fwaw_weights(5, 2.0);

    SECTION("identical inputs give zero") {
        const PhaseLossTerms t = fwaw_phase_loss(p, p, wt);
        REQUIRE(t.ip == 0.0);
        REQUIRE(t.gd == 0.0);
        REQUIRE(t.iaf == 0.0);
    }
    SECTION("a 2*pi shift is invisible") {
        Spectrogram shifted = p;
        for (auto& v : shifted.data) v += kTwoPi;
        const PhaseLossTerms t = fwaw_phase_loss(shifted, p, wt);
        REQUIRE(t.ip < 1e-9);
        REQUIRE(t.gd < 1e-9);
        REQUIRE(t.iaf < 1e-9);
    }
    SECTION("adding random integer multiples of 2*pi changes nothing") {
        const Spectrogram q = random_phase_spec(3, 5, 78, cfg);
        Spectrogram wrapped = q;
        Rng rng(79);
        for (auto& v : wrapped.data)
            v += kTwoPi * static_cast<real>(static_cast<long>(rng.next_u64() % 7) - 3);
        const PhaseLossTerms a = fwaw_phase_loss(q, p, wt);
        const PhaseLossTerms b = fwaw_phase_loss(wrapped, p, wt);
        REQUIRE(std::abs(a.ip - b.ip) < 1e-9);
        REQUIRE(std::abs(a.gd - b.gd) < 1e-9);
        REQUIRE(std::abs(a.iaf - b.iaf) < 1e-9);
    }
    SECTION("random pair matches the brute-force reference to 1e-10") {
        const Spectrogram q = random_phase_spec(3, 5, 80, cfg);
        const PhaseLossTerms t = fwaw_phase_loss(q, p, wt);
        REQUIRE(std::abs(t.ip - oracle_fwaw(q, p, 2.0, 0)) < 1e-10);
        REQUIRE(std::abs(t.gd - oracle_fwaw(q, p, 2.0, 1)) < 1e-10);
        REQUIRE(std::abs(t.iaf - oracle_fwaw(q, p, 2.0, 2)) < 1e-10);
    }
    SECTION("rho = 1 equals an independent unweighted implementation") {
        const Spectrogram q = random_phase_spec(6, 5, 81, cfg);
        const Spectrogram r = random_phase_spec(6, 5, 82, cfg);
        const FwawWeights ones = fwaw_weights(5, 1.0);
        const PhaseLossTerms t = fwaw_phase_loss(q, r, ones);
        REQUIRE(std::abs(t.ip - oracle_fwaw(q, r, 1.0, 0)) < 1e-10);
        REQUIRE(std::abs(t.gd - oracle_fwaw(q, r, 1.0, 1)) < 1e-10);
        REQUIRE(std::abs(t.iaf - oracle_fwaw(q, r, 1.0, 2)) < 1e-10);
    }
    SECTION("shape and frame-count validation") {
        const Spectrogram q = random_phase_spec(3, 4, 83, cfg);
        REQUIRE_THROWS_AS(fwaw_phase_loss(q, p, wt), ShapeError);
        const Spectrogram one = random_phase_spec(1, 5, 84, cfg);
        REQUIRE_THROWS_AS(fwaw_phase_loss(one, one, wt), InvalidInput);
    }
}

TEST_CASE("amplitude_loss: zero, unit offset, loop oracle") {
    const SpectralConfig cfg = small_cfg();
    Spectrogram a(4, 5, SpecDomain::LogAmplitude, cfg);
    Rng rng(85);
    for (auto& v : a.data) v = rng.gaussian();
    REQUIRE(amplitude_loss(a, a) == 0.0);

    Spectrogram b = a;
    for (auto& v : b.data) v += 1.0;
    REQUIRE(amplitude_loss(b, a) == Catch::Approx(1.0).epsilon(1e-12));

    Spectrogram c = a;
    for (auto& v : c.data) v += rng.gaussian();
    real want = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        want += (c.data[i] - a.data[i]) * (c.data[i] - a.data[i]);
    want /= static_cast<real>(a.data.size());
    REQUIRE(amplitude_loss(c, a) == Catch::Approx(want).epsilon(1e-12));

    Spectrogram d(4, 4, SpecDomain::LogAmplitude, cfg);
    REQUIRE_THROWS_AS(amplitude_loss(d, a), ShapeError);
}

TEST_CASE("stft_loss: consistency of natural spectra, antipodal phasors, loop oracle") {
    const SpectralConfig cfg = small_cfg();

    SECTION("identical consistent inputs give (near) zero") {
        const auto wave = testutil::random_wave(256, 86);
        auto [amp, phase] = stft(wave, cfg);
        Spectrogram log_amp(amp.frames, amp.bins, SpecDomain::LogAmplitude, cfg);
        for (size_t i = 0; i < amp.data.size(); ++i)
            log_amp.data[i] = std::log(std::max(amp.data[i], cfg.amp_floor));
        const StftLossTerms t = stft_loss_terms(log_amp, phase, log_amp, phase, cfg);
        REQUIRE(t.reim < 1e-20);
        REQUIRE(t.consistency < 1e-10);
        REQUIRE(t.total() < 1e-10);
    }

    SECTION("unit amplitudes with a pi phase flip give a real/imag term of 4") {
        const Spectrogram p = random_phase_spec(4, 5, 87, cfg);
        Spectrogram flipped = p;
        for (auto& v : flipped.data) {
            v += kPi;
            if (v > kPi) v -= kTwoPi;
        }
        Spectrogram zeros(4, 5, SpecDomain::LogAmplitude, cfg);  // log 1 = 0
        const StftLossTerms t = stft_loss_terms(zeros, flipped, zeros, p, cfg);
        REQUIRE(t.reim == Catch::Approx(4.0).epsilon(1e-12));
    }

    SECTION("random pair matches an independent route") {
        const Spectrogram p1 = random_phase_spec(5, 5, 88, cfg);
        const Spectrogram p2 = random_phase_spec(5, 5, 89, cfg);
        Spectrogram l1(5, 5, SpecDomain::LogAmplitude, cfg);
        Spectrogram l2(5, 5, SpecDomain::LogAmplitude, cfg);
        Rng rng(90);
        for (auto& v : l1.data) v = 0.5 * rng.gaussian();
        for (auto& v : l2.data) v = 0.5 * rng.gaussian();

        // real/imag term by plain loops
        real want_reim = 0.0;
        for (size_t i = 0; i < l1.data.size(); ++i) {
            const real dr = std::exp(l1.data[i]) * std::cos(p1.data[i]) -
                            std::exp(l2.data[i]) * std::cos(p2.data[i]);
            const real di = std::exp(l1.data[i]) * std::sin(p1.data[i]) -
                            std::exp(l2.data[i]) * std::sin(p2.data[i]);
            want_reim += dr * dr + di * di;
        }
        want_reim /= static_cast<real>(l1.data.size());

        // consistency by the verified dsp primitives plus a naive frame DFT
        Spectrogram amp(5, 5, SpecDomain::Amplitude, cfg);
        for (size_t i = 0; i < amp.data.size(); ++i) amp.data[i] = std::exp(l1.data[i]);
        const auto buf = freegan::detail::istft_buffer(amp, p1, cfg);
        const auto win = hann_window(cfg.frame_len);
        real want_cons = 0.0;
        for (int s = 0; s < 5; ++s)
            for (int n = 0; n < 5; ++n) {
                real re = 0.0, im = 0.0;
                for (int i = 0; i < cfg.frame_len; ++i) {
                    const real ang = -kTwoPi * n * i / cfg.fft_size;
                    const real xv = buf[s * cfg.frame_shift + i] * win[i];
                    re += xv * std::cos(ang);
                    im += xv * std::sin(ang);
                }
                const real dr = amp.at(s, n) * std::cos(p1.at(s, n)) - re;
                const real di = amp.at(s, n) * std::sin(p1.at(s, n)) - im;
                want_cons += dr * dr + di * di;
            }
        want_cons /= 25.0;

        const StftLossTerms t = stft_loss_terms(l1, p1, l2, p2, cfg);
        REQUIRE(t.reim == Catch::Approx(want_reim).epsilon(1e-10));
        REQUIRE(t.consistency == Catch::Approx(want_cons).margin(1e-10));
        REQUIRE(stft_loss(l1, p1, l2, p2, cfg) == Catch::Approx(t.reim + t.consistency));
    }
}

TEST_CASE("mel_loss: self, silence floor, loop oracle, frame tolerance") {
    const SpectralConfig cfg = small_cfg();
    const MelFilter filt = mel_filterbank(cfg);
    const auto wave = testutil::random_wave(200, 91);
    const Spectrogram x = mel_spectrogram(wave, cfg, filt);

    SECTION("the source waveform scores (near) zero") {
        REQUIRE(mel_loss(wave, x, cfg, filt) < 1e-6);
    }
    SECTION("silence sits at the floor distance") {
        const std::vector<real> silent(wave.size(), 0.0);
        real want = 0.0;
        for (real v : x.data) want += std::abs(std::log(cfg.amp_floor) - std::log(v));
        want /= static_cast<real>(x.data.size());
        const real got = mel_loss(silent, x, cfg, filt);
        REQUIRE(got > 0.0);
        REQUIRE(got == Catch::Approx(want).epsilon(1e-9));
    }
    SECTION("random pair matches a loop oracle") {
        const auto other = testutil::random_wave(200, 92);
        const Spectrogram mh = mel_spectrogram(other, cfg, filt);
        real want = 0.0;
        for (size_t i = 0; i < x.data.size(); ++i)
            want += std::abs(std::log(mh.data[i]) - std::log(x.data[i]));
        want /= static_cast<real>(x.data.size());
        REQUIRE(mel_loss(other, x, cfg, filt) == Catch::Approx(want).epsilon(1e-9));
    }
    SECTION("length mismatch beyond one frame is rejected") {
        const auto longer = testutil::random_wave(200 + 20 * cfg.frame_shift, 93);
        REQUIRE_THROWS_AS(mel_loss(longer, x, cfg, filt), ShapeError);
    }
}

TEST_CASE("total_loss composition and weight handling") {
    const LossWeights lw;  // (0.45, 0.2, 0.45)
    const PhaseLossTerms zero;
    REQUIRE(total_loss(zero, 0, 0, 0, lw).total == 0.0);

    PhaseLossTerms ones{1.0, 1.0, 1.0};
    const LossReport r = total_loss(ones, 1.0, 1.0, 1.0, lw);
    REQUIRE(r.total == Catch::Approx(4.1).epsilon(1e-12));
    REQUIRE(r.ip == 1.0);
    REQUIRE(r.amplitude == 1.0);

    LossWeights off{0.0, 0.0, 0.0};
    REQUIRE(total_loss(ones, 5.0, 7.0, 9.0, off).total == Catch::Approx(3.0));

    REQUIRE_THROWS_AS(
        total_loss(ones, std::numeric_limits<real>::quiet_NaN(), 0, 0, lw), NumericalError);
}

// ---------------------------------------------------------------------------
// graph losses: agreement with the plain path and finite-difference checks
// ---------------------------------------------------------------------------

namespace {

struct LossFixture {
    SpectralConfig cfg = small_cfg();
    MelFilter filt = mel_filterbank(cfg);
    SynthBasis basis = make_synth_basis(cfg);
    FwawWeights wt = fwaw_weights(5, 2.5);
    LossWeights lw;
    long F = 4;
    Targets tg;
    std::vector<real> pred_log, pred_phase;

    LossFixture() {
        const long N = cfg.n_freq(), K = cfg.mel_bins;
        // natural targets from a real segment, so the consistency term is honest
        const auto wave = testutil::random_wave((F - 1) * cfg.frame_shift, 94);
        auto [amp, phase] = stft(wave, cfg);
        const Spectrogram mel = mel_project(amp, filt);
        tg.log_amp.resize(F * N);
        tg.phase.resize(F * N);
        tg.mel.resize(F * K);
        for (long f = 0; f < F; ++f) {
            for (long n = 0; n < N; ++n) {
                tg.log_amp[f * N + n] = std::log(std::max(amp.at(f, n), cfg.amp_floor));
                tg.phase[f * N + n] = phase.at(f, n);
            }
            for (long k = 0; k < K; ++k)
                tg.mel[f * K + k] = std::max(mel.at(f, k), cfg.amp_floor);
        }
        // predictions offset from the targets with margins away from wrap kinks
        pred_log.resize(F * N);
        pred_phase.resize(F * N);
        for (long f = 0; f < F; ++f)
            for (long n = 0; n < N; ++n) {
                const real s = ((f + n) % 2 == 0) ? 1.0 : -1.0;
                pred_log[f * N + n] = tg.log_amp[f * N + n] + 0.15 * s;
                pred_phase[f * N + n] =
                    tg.phase[f * N + n] + s * (0.18 + 0.06 * f + 0.09 * n);
            }
    }

    LossGraph build(ad::Graph& g, const std::vector<real>& logv,
                    const std::vector<real>& phv, bool lg_req, bool ph_req) const {
        const long N = cfg.n_freq();
        ad::Var la = g.leaf(logv, ad::Shape::t3(1, F, N), lg_req);
        ad::Var ph = g.leaf(phv, ad::Shape::t3(1, F, N), ph_req);
        const PredictionVars pv = reconstruct_graph(g, la, ph, basis, F);
        return build_losses(g, pv, basis, filt, tg, 1, F, wt, lw);
    }
};

}  // namespace

TEST_CASE("graph losses agree with the plain implementations") {
    LossFixture fx;
    ad::Graph g;
    const LossGraph lg = fx.build(g, fx.pred_log, fx.pred_phase, false, false);
    const LossReport r = lg.values();

    Spectrogram pl(static_cast<int>(fx.F), fx.cfg.n_freq(), SpecDomain::LogAmplitude, fx.cfg);
    Spectrogram pp(static_cast<int>(fx.F), fx.cfg.n_freq(), SpecDomain::Phase, fx.cfg);
    Spectrogram tl = pl, tp = pp;
    pl.data = fx.pred_log;
    pp.data = fx.pred_phase;
    tl.data = fx.tg.log_amp;
    tp.data = fx.tg.phase;

    const PhaseLossTerms pt = fwaw_phase_loss(pp, tp, fx.wt);
    REQUIRE(r.ip == Catch::Approx(pt.ip).epsilon(1e-12));
    REQUIRE(r.gd == Catch::Approx(pt.gd).epsilon(1e-12));
    REQUIRE(r.iaf == Catch::Approx(pt.iaf).epsilon(1e-12));
    REQUIRE(r.amplitude == Catch::Approx(amplitude_loss(pl, tl)).epsilon(1e-12));
    REQUIRE(r.stft == Catch::Approx(stft_loss(pl, pp, tl, tp, fx.cfg)).margin(1e-10));
    REQUIRE(r.total ==
            Catch::Approx(r.ip + r.gd + r.iaf + 0.45 * r.amplitude + 0.2 * r.stft +
                          0.45 * r.mel)
                .epsilon(1e-12));
    for (real v : {r.ip, r.gd, r.iaf, r.amplitude, r.stft, r.mel}) REQUIRE(v >= 0.0);
}

TEST_CASE("every loss gradient matches central finite differences") {
    LossFixture fx;
    constexpr real kTol = 1e-3;

    auto pick = [&](const LossGraph& lg, int which) {
        switch (which) {
            case 0: return lg.ip;
            case 1: return lg.gd;
            case 2: return lg.iaf;
            case 3: return lg.amplitude;
            case 4: return lg.stft;
            default: return lg.mel;
        }
    };

    auto check_wrt_phase = [&](int which) {
        auto rb = [&](ad::Graph& g, const std::vector<real>& v) {
            const long N = fx.cfg.n_freq();
            ad::Var la = g.leaf(fx.pred_log, ad::Shape::t3(1, fx.F, N), false);
            ad::Var ph = g.leaf(v, ad::Shape::t3(1, fx.F, N), true);
            const PredictionVars pv = reconstruct_graph(g, la, ph, fx.basis, fx.F);
            LossGraph lg = build_losses(g, pv, fx.basis, fx.filt, fx.tg, 1, fx.F, fx.wt, fx.lw);
            return std::pair<ad::Var, ad::Var>(pick(lg, which), ph);
        };
        return grad_check(fx.pred_phase, rb, 1e-5).max_rel_err;
    };
    auto check_wrt_log = [&](int which) {
        auto rb = [&](ad::Graph& g, const std::vector<real>& v) {
            const long N = fx.cfg.n_freq();
            ad::Var la = g.leaf(v, ad::Shape::t3(1, fx.F, N), true);
            ad::Var ph = g.leaf(fx.pred_phase, ad::Shape::t3(1, fx.F, N), false);
            const PredictionVars pv = reconstruct_graph(g, la, ph, fx.basis, fx.F);
            LossGraph lg = build_losses(g, pv, fx.basis, fx.filt, fx.tg, 1, fx.F, fx.wt, fx.lw);
            return std::pair<ad::Var, ad::Var>(pick(lg, which), la);
        };
        return grad_check(fx.pred_log, rb, 1e-5).max_rel_err;
    };

    REQUIRE(check_wrt_phase(0) < kTol);  // ip
    REQUIRE(check_wrt_phase(1) < kTol);  // gd
    REQUIRE(check_wrt_phase(2) < kTol);  // iaf
    REQUIRE(check_wrt_log(3) < kTol);    // amplitude
    REQUIRE(check_wrt_phase(4) < kTol);  // stft via phase
    REQUIRE(check_wrt_log(4) < kTol);    // stft via log-amplitude
    REQUIRE(check_wrt_phase(5) < kTol);  // mel via phase
    REQUIRE(check_wrt_log(5) < kTol);    // mel via log-amplitude
}
