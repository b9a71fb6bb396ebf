// freegan command-line front end: train / synth / copy-syn / eval / inspect.
//
// Exit codes: 0 success, 2 input or config error, 3 checkpoint or file-format
// error, 1 unexpected runtime failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "freegan/losses.hpp"
#include "freegan/mel_io.hpp"
#include "freegan/metrics.hpp"
#include "freegan/model.hpp"
#include "freegan/run_config.hpp"
#include "freegan/trainer.hpp"
#include "freegan/wav_io.hpp"

namespace fs = std::filesystem;
using namespace freegan;

namespace {

std::vector<fs::path> list_wavs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw InvalidInput("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

Dataset load_dataset(const fs::path& dir, int expected_rate) {
    Dataset d;
    for (const auto& p : list_wavs(dir)) {
        const AudioFile a = read_wav(p.string());
        if (a.sample_rate_hz != expected_rate)
            throw InvalidInput(p.filename().string() + ": sample rate " +
                               std::to_string(a.sample_rate_hz) + ", expected " +
                               std::to_string(expected_rate));
        d.names.push_back(p.filename().string());
        d.waves.push_back(a.samples);
    }
    if (d.size() == 0) throw InvalidInput("no .wav files in " + dir.string());
    return d;
}

std::string ckpt_name(long step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_%06ld.fgv", step);
    return buf;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume_path) {
    TrainConfig cfg = load_run_config(config_path);
    const Dataset data = load_dataset(data_dir, cfg.spectral.sample_rate_hz);
    fs::create_directories(out_dir);

    Checkpoint resume;
    const bool resuming = !resume_path.empty();
    if (resuming) {
        resume = load_checkpoint(resume_path);
        validate_resume_compat(resume, cfg);
        if (resume.step >= cfg.steps)
            throw InvalidInput("checkpoint is already at step " + std::to_string(resume.step) +
                               " >= steps " + std::to_string(cfg.steps));
    }

    const fs::path log_path = fs::path(out_dir) / "loss_log.tsv";
    std::ofstream log(log_path, resuming ? std::ios::app : std::ios::trunc);
    if (!log) throw InvalidInput("cannot open " + log_path.string());

    TrainHooks hooks;
    hooks.on_step = [&](long step, const LossReport& r) {
        log << format_log_line(step, r) << '\n';
        log.flush();
        if (step % 100 == 0 || step == 1)
            std::cout << "step " << step << "  total " << r.total << std::endl;
    };
    hooks.on_checkpoint = [&](const Checkpoint& c) {
        const fs::path p = fs::path(out_dir) / ckpt_name(c.step);
        save_checkpoint(c, p.string());
        std::cout << "wrote " << p.string() << std::endl;
    };

    {
        const ModelParams probe = resuming ? resume.model : init_model(cfg.spectral, cfg.model, cfg.seed);
        std::cout << "training " << data.size() << " utterances, " << cfg.steps << " steps, "
                  << count_params(probe) << " parameters" << std::endl;
    }
    train(cfg, data, hooks, resuming ? &resume : nullptr);
    return 0;
}

Spectrogram mel_from_input(const std::string& input, const TrainConfig& cfg,
                           const MelFilter& filt) {
    const fs::path p(input);
    if (p.extension() == ".wav") {
        const AudioFile a = read_wav(input);
        if (a.sample_rate_hz != cfg.spectral.sample_rate_hz)
            throw InvalidInput(p.filename().string() + ": sample rate " +
                               std::to_string(a.sample_rate_hz) + ", expected " +
                               std::to_string(cfg.spectral.sample_rate_hz));
        return mel_spectrogram(a.samples, cfg.spectral, filt);
    }
    const MelFile m = read_mel_file(input);
    if (static_cast<int>(m.bins) != cfg.spectral.mel_bins)
        throw FormatError("mel file has " + std::to_string(m.bins) + " columns, expected " +
                          std::to_string(cfg.spectral.mel_bins));
    Spectrogram mel(static_cast<int>(m.frames), static_cast<int>(m.bins), SpecDomain::Mel,
                    cfg.spectral);
    for (size_t i = 0; i < m.values.size(); ++i)
        mel.data[i] = std::max(static_cast<real>(m.values[i]), cfg.spectral.amp_floor);
    return mel;
}

int cmd_synth(const std::string& ckpt_path, const std::string& input, const std::string& output,
              bool wav_only) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (wav_only && fs::path(input).extension() != ".wav")
        throw InvalidInput("copy-syn expects a .wav input");
    const MelFilter filt = mel_filterbank(ckpt.cfg.spectral);
    const SynthBasis basis = make_synth_basis(ckpt.cfg.spectral);
    const Spectrogram mel = mel_from_input(input, ckpt.cfg, filt);
    const ForwardResult res = forward(mel, ckpt.model, filt, basis);
    AudioFile out;
    out.sample_rate_hz = ckpt.cfg.spectral.sample_rate_hz;
    out.samples = res.wave;
    write_wav(output, out);
    std::cout << "wrote " << output << " (" << res.wave.size() << " samples)" << std::endl;
    return 0;
}

int cmd_eval(const std::string& ref_dir, const std::string& syn_dir, const std::string& report) {
    const auto ref_files = list_wavs(ref_dir);
    const auto syn_files = list_wavs(syn_dir);
    if (syn_files.empty()) throw InvalidInput("no .wav files in " + syn_dir);

    std::map<std::string, fs::path> ref_by_name, syn_by_name;
    for (const auto& p : ref_files) ref_by_name[p.filename().string()] = p;
    for (const auto& p : syn_files) syn_by_name[p.filename().string()] = p;

    std::vector<std::string> matched, unmatched;
    for (const auto& [name, p] : ref_by_name)
        (syn_by_name.count(name) ? matched : unmatched).push_back(name);
    for (const auto& [name, p] : syn_by_name)
        if (!ref_by_name.count(name)) unmatched.push_back(name);

    // metrics config keyed by sample rate; frame geometry stays at defaults
    std::map<int, MelFilter> filters;
    auto eval_pair = [&](const std::string& name) {
        const AudioFile ref = read_wav(ref_by_name[name].string());
        const AudioFile syn = read_wav(syn_by_name[name].string());
        if (ref.sample_rate_hz != syn.sample_rate_hz)
            throw InvalidInput(name + ": sample rates differ");
        SpectralConfig cfg;
        cfg.sample_rate_hz = ref.sample_rate_hz;
        const MelFilter& filt = filters.at(ref.sample_rate_hz);
        EvalRow row;
        row.name = name;
        row.snr_db = snr(ref.samples, syn.samples);
        row.mcd_db = mcd(ref.samples, syn.samples, cfg, filt);
        const F0Metrics fm = f0_metrics(extract_f0(ref.samples, cfg), extract_f0(syn.samples, cfg));
        row.f0_rmse_cents = fm.f0_rmse_cents;
        row.vuv_err_pct = fm.vuv_error_pct;
        return row;
    };

    // pre-build filterbanks serially (rates are few), then fan out
    for (const auto& name : matched) {
        const AudioFile ref = read_wav(ref_by_name[name].string());
        if (!filters.count(ref.sample_rate_hz)) {
            SpectralConfig cfg;
            cfg.sample_rate_hz = ref.sample_rate_hz;
            filters.emplace(ref.sample_rate_hz, mel_filterbank(cfg));
        }
    }

    std::vector<EvalRow> rows(matched.size());
    std::vector<std::string> failed;
    const size_t workers = std::max<size_t>(1, std::thread::hardware_concurrency());
    std::vector<std::future<void>> futs;
    std::mutex failed_mu;
    for (size_t w = 0; w < workers; ++w)
        futs.push_back(std::async(std::launch::async, [&, w] {
            for (size_t i = w; i < matched.size(); i += workers) {
                try {
                    rows[i] = eval_pair(matched[i]);
                } catch (const Error& e) {
                    std::lock_guard<std::mutex> lk(failed_mu);
                    failed.push_back(matched[i] + " (" + e.what() + ")");
                    rows[i].name = "";
                }
            }
        }));
    for (auto& f : futs) f.get();

    std::vector<EvalRow> ok;
    for (auto& r : rows)
        if (!r.name.empty()) ok.push_back(std::move(r));
    std::vector<std::string> footer = unmatched;
    footer.insert(footer.end(), failed.begin(), failed.end());
    std::sort(footer.begin(), footer.end());
    write_eval_report(report, ok, footer);
    std::cout << "evaluated " << ok.size() << " pairs, " << footer.size() << " warnings -> "
              << report << std::endl;
    return 0;
}

int cmd_inspect(const std::string& ckpt_path) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    std::cout << "checkpoint: " << ckpt_path << "\n"
              << "step: " << ckpt.step << "\n"
              << "parameters: " << count_params(ckpt.model) << "\n"
              << "flops_per_1s: " << count_flops(ckpt.model, ckpt.cfg.spectral, 1.0) << "\n"
              << "config:\n";
    std::istringstream cfg_text(format_run_config(ckpt.cfg));
    std::string line;
    while (std::getline(cfg_text, line)) std::cout << "  " << line << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GAN-free mel-spectrogram vocoder"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, resume_path;
    auto* train_cmd = app.add_subcommand("train", "Train a vocoder on a directory of WAV files");
    train_cmd->add_option("--config", config_path, "Run configuration file")->required();
    train_cmd->add_option("--data-dir", data_dir, "Directory of 16-bit mono WAV files")->required();
    train_cmd->add_option("--out", out_dir, "Output directory for checkpoints and the loss log")
        ->required();
    train_cmd->add_option("--resume", resume_path, "Checkpoint to resume from");

    std::string s_ckpt, s_input, s_output;
    auto* synth_cmd = app.add_subcommand("synth", "Synthesize speech from a WAV or MELB input");
    synth_cmd->add_option("--checkpoint", s_ckpt, "Trained checkpoint")->required();
    synth_cmd->add_option("--input", s_input, "Input .wav (copy-synthesis) or MELB mel file")
        ->required();
    synth_cmd->add_option("--output", s_output, "Output .wav path")->required();

    std::string c_ckpt, c_input, c_output;
    auto* copy_cmd = app.add_subcommand("copy-syn", "Copy-synthesis: analyze a WAV and resynthesize");
    copy_cmd->add_option("--checkpoint", c_ckpt, "Trained checkpoint")->required();
    copy_cmd->add_option("--input", c_input, "Input .wav")->required();
    copy_cmd->add_option("--output", c_output, "Output .wav path")->required();

    std::string ref_dir, syn_dir, report_path;
    auto* eval_cmd = app.add_subcommand("eval", "Objective metrics over matched WAV directories");
    eval_cmd->add_option("--ref-dir", ref_dir, "Reference WAV directory")->required();
    eval_cmd->add_option("--syn-dir", syn_dir, "Synthesized WAV directory")->required();
    eval_cmd->add_option("--report", report_path, "Output report path (TSV)")->required();

    std::string i_ckpt;
    auto* inspect_cmd = app.add_subcommand("inspect", "Print checkpoint complexity and config");
    inspect_cmd->add_option("--checkpoint", i_ckpt, "Checkpoint to inspect")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(train_cmd))
            return cmd_train(config_path, data_dir, out_dir, resume_path);
        if (app.got_subcommand(synth_cmd)) return cmd_synth(s_ckpt, s_input, s_output, false);
        if (app.got_subcommand(copy_cmd)) return cmd_synth(c_ckpt, c_input, c_output, true);
        if (app.got_subcommand(eval_cmd)) return cmd_eval(ref_dir, syn_dir, report_path);
        if (app.got_subcommand(inspect_cmd)) return cmd_inspect(i_ckpt);
    } catch (const FormatError& e) {
        std::cerr << e.what() << std::endl;
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << e.what() << std::endl;
        return 1;
    } catch (const Error& e) {
        std::cerr << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
