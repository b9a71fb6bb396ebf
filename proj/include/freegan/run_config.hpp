#ifndef FREEGAN_RUN_CONFIG_HPP
#define FREEGAN_RUN_CONFIG_HPP

#include <fstream>
#include <sstream>
#include <string>

#include "freegan/common.hpp"
#include "freegan/trainer.hpp"

// Plain-text run configuration: UTF-8 "key = value" lines, '#' comments.
// Unknown keys are rejected; every key has the documented default below.

namespace freegan {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("expected true/false for '" + key + "', got '" + v + "'");
}

}  // namespace detail

inline TrainConfig parse_run_config(const std::string& text) {
    TrainConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");

        auto as_int = [&] {
            try {
                return std::stol(val);
            } catch (...) {
                throw ConfigError("bad integer for '" + key + "': " + val);
            }
        };
        auto as_real = [&] {
            try {
                return std::stod(val);
            } catch (...) {
                throw ConfigError("bad number for '" + key + "': " + val);
            }
        };

        if (key == "sample_rate_hz") c.spectral.sample_rate_hz = static_cast<int>(as_int());
        else if (key == "frame_len") c.spectral.frame_len = static_cast<int>(as_int());
        else if (key == "frame_shift") c.spectral.frame_shift = static_cast<int>(as_int());
        else if (key == "fft_size") c.spectral.fft_size = static_cast<int>(as_int());
        else if (key == "mel_bins") c.spectral.mel_bins = static_cast<int>(as_int());
        else if (key == "amp_floor") c.spectral.amp_floor = as_real();
        else if (key == "width") c.model.width = static_cast<int>(as_int());
        else if (key == "expansion") c.model.expansion = static_cast<int>(as_int());
        else if (key == "kernel") c.model.kernel = static_cast<int>(as_int());
        else if (key == "activation") {
            if (val == "snake") c.model.activation = Activation::Snake;
            else if (val == "gelu") c.model.activation = Activation::Gelu;
            else throw ConfigError("activation must be snake|gelu, got '" + val + "'");
        } else if (key == "prior") {
            if (val == "pseudo_inverse") c.model.prior = PriorMode::PseudoInverse;
            else if (val == "learnable_linear") c.model.prior = PriorMode::LearnableLinear;
            else throw ConfigError("prior must be pseudo_inverse|learnable_linear, got '" + val + "'");
        } else if (key == "phase_loss") {
            if (val == "fwaw") c.fwaw_weighted = true;
            else if (val == "unweighted") c.fwaw_weighted = false;
            else throw ConfigError("phase_loss must be fwaw|unweighted, got '" + val + "'");
        }
        else if (key == "phase_detach_amplitude") c.model.phase_detach_amplitude = detail::parse_bool(val, key);
        else if (key == "phase_concat_prior") c.model.phase_concat_prior = detail::parse_bool(val, key);
        else if (key == "rho") c.rho = as_real();
        else if (key == "lambda_a") c.loss_weights.lambda_a = as_real();
        else if (key == "lambda_s") c.loss_weights.lambda_s = as_real();
        else if (key == "lambda_mel") c.loss_weights.lambda_mel = as_real();
        else if (key == "lr") c.optim.lr = as_real();
        else if (key == "beta1") c.optim.beta1 = as_real();
        else if (key == "beta2") c.optim.beta2 = as_real();
        else if (key == "eps") c.optim.eps = as_real();
        else if (key == "weight_decay") c.optim.weight_decay = as_real();
        else if (key == "lr_decay") c.optim.lr_decay = as_real();
        else if (key == "steps") c.steps = as_int();
        else if (key == "batch_size") c.batch_size = static_cast<int>(as_int());
        else if (key == "segment_frames") c.segment_frames = static_cast<int>(as_int());
        else if (key == "seed") c.seed = static_cast<uint64_t>(as_int());
        else if (key == "checkpoint_every") c.checkpoint_every = as_int();
        else if (key == "grad_clip") c.grad_clip = as_real();
        else throw ConfigError("unknown key '" + key + "' (line " + std::to_string(lineno) + ")");
    }
    c.validate();
    return c;
}

inline TrainConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str());
}

// Inverse of parse_run_config; the output is itself a valid config file.
inline std::string format_run_config(const TrainConfig& c) {
    std::ostringstream o;
    o << "sample_rate_hz = " << c.spectral.sample_rate_hz << "\n"
      << "frame_len = " << c.spectral.frame_len << "\n"
      << "frame_shift = " << c.spectral.frame_shift << "\n"
      << "fft_size = " << c.spectral.fft_size << "\n"
      << "mel_bins = " << c.spectral.mel_bins << "\n"
      << "amp_floor = " << c.spectral.amp_floor << "\n"
      << "width = " << c.model.width << "\n"
      << "expansion = " << c.model.expansion << "\n"
      << "kernel = " << c.model.kernel << "\n"
      << "activation = " << (c.model.activation == Activation::Gelu ? "gelu" : "snake") << "\n"
      << "prior = "
      << (c.model.prior == PriorMode::LearnableLinear ? "learnable_linear" : "pseudo_inverse")
      << "\n"
      << "phase_loss = " << (c.fwaw_weighted ? "fwaw" : "unweighted") << "\n"
      << "phase_detach_amplitude = " << (c.model.phase_detach_amplitude ? "true" : "false") << "\n"
      << "phase_concat_prior = " << (c.model.phase_concat_prior ? "true" : "false") << "\n"
      << "rho = " << c.rho << "\n"
      << "lambda_a = " << c.loss_weights.lambda_a << "\n"
      << "lambda_s = " << c.loss_weights.lambda_s << "\n"
      << "lambda_mel = " << c.loss_weights.lambda_mel << "\n"
      << "lr = " << c.optim.lr << "\n"
      << "beta1 = " << c.optim.beta1 << "\n"
      << "beta2 = " << c.optim.beta2 << "\n"
      << "eps = " << c.optim.eps << "\n"
      << "weight_decay = " << c.optim.weight_decay << "\n"
      << "lr_decay = " << c.optim.lr_decay << "\n"
      << "steps = " << c.steps << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "segment_frames = " << c.segment_frames << "\n"
      << "seed = " << c.seed << "\n"
      << "checkpoint_every = " << c.checkpoint_every << "\n"
      << "grad_clip = " << c.grad_clip << "\n";
    return o.str();
}

}  // namespace freegan

#endif  // FREEGAN_RUN_CONFIG_HPP
