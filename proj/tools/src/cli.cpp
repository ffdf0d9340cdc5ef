#include "cyclemae/cli.hpp"

#include "cyclemae/adapt_eval.hpp"
#include "cyclemae/checkpoint.hpp"
#include "cyclemae/objective.hpp"
#include "cyclemae/pretrain.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace cyclemae::cli {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<video::VideoClip> train_clips(const std::vector<video::StoredSample>& samples) {
    std::vector<video::VideoClip> out;
    for (const video::StoredSample& s : samples) {
        if (s.split == video::Split::train) {
            out.push_back(s.clip);
        }
    }
    return out;
}

}  // namespace

std::filesystem::path generate_data(const config::RunConfig& cfg) {
    const config::DataConfig& d = cfg.data;
    std::filesystem::create_directories(d.dir / "clips");
    std::vector<video::ManifestEntry> entries;
    for (int i = 0; i < d.corpus.count; ++i) {
        const video::CorpusItem item = video::generate_corpus_item(d.corpus, i);
        std::ostringstream name;
        name << "clip_" << std::setw(4) << std::setfill('0') << i;
        const std::string stem = "clips/" + name.str();
        const std::filesystem::path base = d.dir / stem;
        video::write_clip(base.string() + ".clip", item.clip);
        video::ClipMetadata meta;
        meta.source_id = name.str();
        meta.period_hint = item.spec.period;
        meta.class_label = item.class_label;
        meta.spec = item.spec;
        meta.seed = item.seed;
        meta.has_mask = d.write_masks;
        video::write_metadata(base.string() + ".meta", meta);
        if (d.write_masks) {
            video::write_label_map(base.string() + ".mask", item.mask);
        }
        entries.push_back({stem, d.split_of(i)});
    }
    video::write_manifest(d.manifest(), entries);
    return d.manifest();
}

Mat export_similarity(const std::filesystem::path& checkpoint_path,
                      const std::filesystem::path& clip_path, const std::filesystem::path& out,
                      double mask_ratio, std::uint64_t mask_seed) {
    const backbone::Model model = checkpoint::to_model(checkpoint::load(checkpoint_path));
    std::filesystem::path file = clip_path;
    if (file.extension() != ".clip") {
        file += ".clip";
    }
    const video::VideoClip clip = video::read_clip(file);
    const backbone::ModelConfig& mc = model.config();
    if (clip.frames != mc.frames || clip.height != mc.height || clip.width != mc.width ||
        clip.channels != mc.channels) {
        throw std::invalid_argument("clip " + file.string() +
                                    " does not match the checkpoint's input shape");
    }
    const tokenizer::PatchGrid grid = tokenizer::patchify(clip, mc.patch);
    masking::MaskPlan plan = masking::full_visibility(grid.groups, grid.positions);
    if (mask_ratio > 0.0) {
        Rng rng(mask_seed);
        plan = masking::sample_uniform_frame_mask(grid.groups, grid.positions, mask_ratio, rng);
    }
    const backbone::LatentTokens lat =
        backbone::encode(model, masking::apply_mask(backbone::embed(model, grid), plan));
    const Mat S = objective::self_similarity(backbone::project_frames(model, lat));

    std::ostringstream text;
    text << "# N_T=" << S.rows() << '\n';
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        for (Eigen::Index j = 0; j < S.cols(); ++j) {
            text << (j ? "," : "") << format_number(S(i, j));
        }
        text << '\n';
    }
    write_text(out, text.str());
    return S;
}

Mat read_similarity_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::string line;
    if (!in || !std::getline(in, line) || line.rfind("# N_T=", 0) != 0) {
        throw std::runtime_error(path.string() + " is not a similarity matrix file");
    }
    const int n = std::stoi(line.substr(6));
    Mat S(n, n);
    for (int i = 0; i < n; ++i) {
        if (!std::getline(in, line)) {
            throw std::runtime_error("truncated similarity matrix " + path.string());
        }
        std::stringstream row(line);
        std::string cell;
        for (int j = 0; j < n; ++j) {
            if (!std::getline(row, cell, ',')) {
                throw std::runtime_error("short row in " + path.string());
            }
            S(i, j) = std::stod(cell);
        }
    }
    return S;
}

AblationTable run_ablation(const config::RunConfig& cfg, std::ostream& log) {
    const std::vector<video::StoredSample> samples =
        video::load_manifest_samples(cfg.data.manifest());
    const std::vector<video::VideoClip> clips = train_clips(samples);
    const std::vector<adapt::LabeledClip> train = adapt::to_labeled(samples, video::Split::train);
    const std::vector<adapt::LabeledClip> test = adapt::to_labeled(samples, video::Split::test);

    adapt::FinetuneConfig fcfg = cfg.finetune;
    fcfg.task = adapt::Task::segmentation;
    fcfg.classes = 2;
    fcfg.freeze_encoder = true;

    std::map<std::pair<std::array<int, 3>, double>, double> done;
    auto cell = [&](std::array<int, 3> patch, double ratio) {
        const auto key = std::make_pair(patch, ratio);
        if (const auto it = done.find(key); it != done.end()) {
            return AblationCell{patch, ratio, it->second};
        }
        backbone::ModelConfig mcfg = cfg.model;
        mcfg.patch.patch_h = patch[0];
        mcfg.patch.patch_w = patch[1];
        mcfg.patch.patch_t = patch[2];
        pretrain::TrainConfig tcfg = cfg.pretrain;
        tcfg.mask_ratio = ratio;
        log << "ablation: patch " << patch[0] << "x" << patch[1] << "x" << patch[2] << ", ratio "
            << ratio << " ..." << std::flush;
        const pretrain::TrainState state = pretrain::run_pretraining(
            tcfg, mcfg, pretrain::prepare_clips(clips, mcfg), pretrain::RunOptions{});
        const adapt::FinetuneResult r = adapt::finetune(state.model, train, test, fcfg);
        const double mdice = r.report.value("mDice").value_or(0.0);
        log << " mDice " << std::fixed << std::setprecision(2) << 100.0 * mdice
            << std::defaultfloat << '\n';
        done[key] = mdice;
        return AblationCell{patch, ratio, mdice};
    };

    AblationTable table;
    for (const auto& p : cfg.ablation.patch_sizes) {
        table.patch_sweep.push_back(cell(p, cfg.ablation.reference_ratio));
    }
    for (const double m : cfg.ablation.mask_ratios) {
        table.ratio_sweep.push_back(cell(cfg.ablation.reference_patch, m));
    }
    return table;
}

std::string format_ablation(const AblationTable& table) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << "| Patch Size | mDice [%] |\n|---|---|\n";
    for (const AblationCell& c : table.patch_sweep) {
        out << "| " << c.patch[0] << "x" << c.patch[1] << "x" << c.patch[2] << " | "
            << 100.0 * c.mdice << " |\n";
    }
    out << "\n| Ratio | mDice [%] |\n|---|---|\n";
    for (const AblationCell& c : table.ratio_sweep) {
        out << "| " << static_cast<int>(std::lround(100.0 * c.mask_ratio)) << "% | "
            << 100.0 * c.mdice << " |\n";
    }
    return out.str();
}

namespace {

backbone::Model initial_encoder(const config::RunConfig& cfg, std::ostream& out) {
    const std::string& init = cfg.output.init_checkpoint;
    if (init == "random") {
        out << "finetune: starting from a randomly initialised encoder\n";
        return pretrain::initial_state(cfg.pretrain, cfg.model).model;
    }
    const std::filesystem::path path =
        init.empty() ? cfg.output.pretrain_dir() / "final.ckpt" : std::filesystem::path(init);
    out << "finetune: loading encoder from " << path.string() << '\n';
    return checkpoint::load_model(path, cfg.model);
}

int cmd_gen_data(const config::RunConfig& cfg, std::ostream& out) {
    const auto manifest = generate_data(cfg);
    out << "wrote " << cfg.data.corpus.count << " clips and " << manifest.string() << '\n';
    return 0;
}

int cmd_pretrain(const config::RunConfig& cfg, const std::string& resume, std::ostream& out) {
    const auto samples = video::load_manifest_samples(cfg.data.manifest());
    const auto clips = pretrain::prepare_clips(train_clips(samples), cfg.model);
    pretrain::RunOptions options;
    options.output_dir = cfg.output.pretrain_dir();
    std::int64_t last = 0;
    options.on_step = [&](const pretrain::StepRecord& r) { last = r.step; };
    if (resume.empty()) {
        pretrain::run_pretraining(cfg.pretrain, cfg.model, clips, options);
    } else {
        pretrain::TrainConfig stored;
        pretrain::TrainState state = pretrain::from_checkpoint(checkpoint::load(resume), &stored);
        if (!(state.model.config() == cfg.model)) {
            throw std::invalid_argument("resume checkpoint model config differs from config 'model'");
        }
        pretrain::train(state, cfg.pretrain, clips, options);
    }
    out << "pretrain: " << clips.size() << " clips, finished at step " << last << "; wrote "
        << (options.output_dir / "final.ckpt").string() << '\n';
    return 0;
}

int cmd_finetune(const config::RunConfig& cfg, std::ostream& out) {
    const auto samples = video::load_manifest_samples(cfg.data.manifest());
    const auto train = adapt::to_labeled(samples, video::Split::train);
    const auto test = adapt::to_labeled(samples, video::Split::test);
    const backbone::Model model = initial_encoder(cfg, out);
    const adapt::FinetuneResult r = adapt::finetune(model, train, test, cfg.finetune);
    const auto dir = cfg.output.finetune_dir();
    checkpoint::save(dir / "head.ckpt", adapt::to_checkpoint(r, cfg.finetune));
    write_text(dir / "report.json", adapt::to_json(r.report) + "\n");
    write_text(dir / "report.tsv", adapt::to_tsv(r.report));
    out << adapt::to_tsv(r.report);
    return 0;
}

int cmd_evaluate(const config::RunConfig& cfg, const std::string& ckpt_path,
                 const std::string& split_name, const std::string& out_path, std::ostream& out) {
    const std::filesystem::path path =
        ckpt_path.empty() ? cfg.output.finetune_dir() / "head.ckpt" : std::filesystem::path(ckpt_path);
    const checkpoint::Checkpoint ckpt = checkpoint::load(path);
    const adapt::TaskHead head = adapt::head_from_checkpoint(ckpt);
    const backbone::Model model = checkpoint::to_model(ckpt);
    const video::Split split = video::parse_split(split_name);
    const auto samples =
        adapt::to_labeled(video::load_manifest_samples(cfg.data.manifest()), split);
    const double fraction = std::stod(ckpt.metadata.at("label_fraction"));
    const adapt::MetricReport report = adapt::evaluate(model, head, samples, split_name, fraction);
    const std::filesystem::path target =
        out_path.empty() ? cfg.output.finetune_dir() / ("evaluate_" + split_name + ".json")
                         : std::filesystem::path(out_path);
    write_text(target, adapt::to_json(report) + "\n");
    std::filesystem::path tsv = target;
    tsv.replace_extension(".tsv");
    write_text(tsv, adapt::to_tsv(report));
    out << adapt::to_tsv(report);
    return 0;
}

int cmd_ablate(const config::RunConfig& cfg, std::ostream& out) {
    const AblationTable table = run_ablation(cfg, out);
    const std::string text = format_ablation(table);
    write_text(cfg.output.ablation_dir() / "ablation.md", text);
    out << text;
    return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Masked-autoencoder pretraining toolkit for periodic video", "cyclemae"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string resume, checkpoint_path, split = "test", out_path, clip_path;
    double mask_ratio = 0.0;
    std::uint64_t mask_seed = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "Run configuration (JSON)")->required();
        sub->add_option("--seed", seed, "Override the data, pretrain and finetune seeds");
    };
    CLI::App* gen = app.add_subcommand("gen-data", "Write the synthetic corpus and manifest");
    add_common(gen);
    CLI::App* pre = app.add_subcommand("pretrain", "Self-supervised pretraining");
    add_common(pre);
    pre->add_option("--resume", resume, "Continue from a pretraining checkpoint");
    CLI::App* fin = app.add_subcommand("finetune", "Train a task head and report test metrics");
    add_common(fin);
    CLI::App* eva = app.add_subcommand("evaluate", "Recompute metrics from a fine-tuned checkpoint");
    add_common(eva);
    eva->add_option("--checkpoint", checkpoint_path, "Fine-tuned checkpoint (default: output dir)");
    eva->add_option("--split", split, "Manifest split to evaluate")->capture_default_str();
    eva->add_option("--out", out_path, "Report path (JSON; a .tsv is written beside it)");
    CLI::App* ins = app.add_subcommand("inspect-sim", "Export a temporal self-similarity matrix");
    ins->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
    ins->add_option("--clip", clip_path, "Clip file (.clip)")->required();
    ins->add_option("--out", out_path, "Output CSV")->required();
    ins->add_option("--mask-ratio", mask_ratio, "Encode under a uniform-frame mask at this ratio");
    ins->add_option("--mask-seed", mask_seed, "Seed of the inspection mask");
    CLI::App* abl = app.add_subcommand("ablate", "Sweep patch sizes and mask ratios");
    add_common(abl);

    std::vector<std::string> argv_store;
    argv_store.push_back("cyclemae");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (std::string& a : argv_store) {
        argv.push_back(a.data());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (ins->parsed()) {
            const Mat S = export_similarity(checkpoint_path, clip_path, out_path, mask_ratio,
                                            mask_seed);
            out << "wrote " << S.rows() << "x" << S.cols() << " similarity matrix to " << out_path
                << '\n';
            return 0;
        }
        config::RunConfig cfg = config::load_run_config(config_path);
        for (CLI::App* sub : {gen, pre, fin, eva, abl}) {
            if (sub->parsed() && sub->count("--seed") > 0) {
                config::override_seed(cfg, seed);
            }
        }
        if (gen->parsed()) return cmd_gen_data(cfg, out);
        if (pre->parsed()) return cmd_pretrain(cfg, resume, out);
        if (fin->parsed()) return cmd_finetune(cfg, out);
        if (eva->parsed()) return cmd_evaluate(cfg, checkpoint_path, split, out_path, out);
        if (abl->parsed()) return cmd_ablate(cfg, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace cyclemae::cli
