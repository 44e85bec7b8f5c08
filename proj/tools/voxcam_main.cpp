// voxcam: batch pipeline driver. Subcommands cover dataset synthesis, model
// training, architecture search, the SVM baseline, evaluation, visual
// explanation, and region reporting. Every run writes its artifacts under
// --out together with a run.json manifest (config echo, seed, output paths;
// no timestamps, so reruns are byte-identical).

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "voxcam/voxcam.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace voxcam;

namespace {

constexpr const char* kVersion = "0.1.0";

// Flat key=value config file; '#' comments. Values stay strings until used.
std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::map<std::string, std::string> kv;
  std::ifstream in(path);
  require(in.good(), Errc::config_error, "cannot open config " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    require(eq != std::string::npos, Errc::config_error,
            path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

struct Settings {
  std::map<std::string, std::string> kv;

  double num(const std::string& key, double fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      raise(Errc::config_error, "config key '" + key + "' is not numeric: " + it->second);
    }
  }
  int integer(const std::string& key, int fallback) const {
    return static_cast<int>(num(key, fallback));
  }
  std::string str(const std::string& key, const std::string& fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  }
  json to_json() const {
    json j = json::object();
    for (const auto& [k, v] : kv) j[k] = v;
    return j;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Errc::io_error, "cannot write " + path.string());
  out << text;
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    std::uint64_t seed, const Settings& settings,
                    const std::vector<std::string>& outputs, const json& extra = json::object()) {
  json j;
  j["tool"] = "voxcam";
  j["version"] = kVersion;
  j["subcommand"] = subcommand;
  j["seed"] = seed;
  j["config"] = settings.to_json();
  j["outputs"] = outputs;
  if (!extra.empty()) j["results"] = extra;
  write_text(out_dir / "run.json", j.dump(2) + "\n");
}

PhantomConfig phantom_config_from(const Settings& s, std::uint64_t seed) {
  PhantomConfig cfg = PhantomConfig::defaults();
  cfg.seed = seed;
  cfg.n_per_class = s.integer("phantom.n_per_class", cfg.n_per_class);
  cfg.noise_sigma = s.num("phantom.noise_sigma", cfg.noise_sigma);
  cfg.background_smooth_sigma = s.num("phantom.smooth_sigma", cfg.background_smooth_sigma);
  const double amp = s.num("phantom.amplitude", 0.0);
  const double radius = s.num("phantom.radius", 0.0);
  for (int c = 0; c < 2; ++c) {
    for (auto& b : cfg.class_blobs[c]) {
      if (amp > 0.0) b.amplitude = static_cast<float>(amp);
      if (radius > 0.0) b.radius = radius;
    }
  }
  return cfg;
}

SplitFractions split_fractions_from(const Settings& s) {
  SplitFractions f;
  f.train = s.num("split.train", f.train);
  f.val = s.num("split.val", f.val);
  f.test = s.num("split.test", f.test);
  return f;
}

std::optional<AugmentConfig> augment_from(const Settings& s, std::uint64_t seed) {
  AugmentConfig a;
  a.copies_per_subject = s.integer("augment.copies", 0);
  if (a.copies_per_subject <= 0) return std::nullopt;
  a.noise_sigma_rel = s.num("augment.noise_sigma_rel", a.noise_sigma_rel);
  a.offset_sigma_rel = s.num("augment.offset_sigma_rel", a.offset_sigma_rel);
  a.compose = s.integer("augment.compose", 0) != 0;
  a.seed = static_cast<std::uint64_t>(s.num("augment.seed", static_cast<double>(seed)));
  return a;
}

ArchitectureSpec arch_from(const Settings& s, const fs::path& config_dir, const Dims3& dims) {
  const std::string arch_path = s.str("arch", "");
  if (!arch_path.empty()) {
    fs::path p = arch_path;
    if (p.is_relative() && !config_dir.empty()) {
      const fs::path beside = config_dir / p;
      if (fs::exists(beside)) p = beside;
    }
    std::ifstream in(p);
    require(in.good(), Errc::config_error, "cannot open arch config " + p.string());
    std::stringstream text;
    text << in.rdbuf();
    return arch_from_text(text.str());
  }
  // default: the reference network for the dataset's grid
  return lenet5_modified_spec({dims[2], dims[1], dims[0]}, s.integer("train.fc_units", 32));
}

AtlasVolume load_atlas_arg(const std::string& atlas_path) {
  fs::path vol = atlas_path;
  fs::path table = vol;
  table.replace_extension(".labels.csv");
  require(fs::exists(vol), Errc::config_error, "atlas volume not found: " + vol.string());
  require(fs::exists(table), Errc::config_error,
          "atlas label table not found: " + table.string() +
              " (expected next to the atlas volume)");
  return load_atlas_files(vol, table);
}

int class_arg_to_index(const std::string& cls) {
  if (cls == "typical") return 0;
  if (cls == "dyslexic") return 1;
  raise(Errc::config_error, "--class must be 'typical' or 'dyslexic', got '" + cls + "'");
}

RelevanceMode mode_arg_to_mode(const std::string& mode) {
  if (mode == "replicate") return RelevanceMode::gradcam2d_replicate;
  if (mode == "slicegrad") return RelevanceMode::gradcam2d_slicegrad;
  if (mode == "3d") return RelevanceMode::gradcam3d;
  raise(Errc::config_error, "--mode must be replicate, slicegrad, or 3d; got '" + mode + "'");
}

// ---------------------------------------------------------------------------
// Subcommand handlers
// ---------------------------------------------------------------------------

int run_phantom(const Settings& s, const fs::path& out_dir, std::uint64_t seed) {
  fs::create_directories(out_dir);
  PhantomConfig cfg = phantom_config_from(s, seed);
  auto [ds, truth] = generate_phantom(cfg);
  save_dataset_dir(out_dir, ds);

  const auto& proto = ds.items.front().volume;
  auto mask_to_volume = [&](const std::vector<std::uint8_t>& bits) {
    BrainVolume v = BrainVolume::zeros(truth.dims, proto.spacing, proto.affine);
    for (std::size_t i = 0; i < bits.size(); ++i) v.data[i] = static_cast<float>(bits[i]);
    return v;
  };
  nifti::write_file(out_dir / "truth_typical.nii", mask_to_volume(truth.blob_masks[0]));
  nifti::write_file(out_dir / "truth_dyslexic.nii", mask_to_volume(truth.blob_masks[1]));

  const AtlasVolume atlas = synthetic_atlas(truth.brain, proto.affine);
  BrainVolume atlas_vol = BrainVolume::zeros(truth.dims, proto.spacing, proto.affine);
  for (std::size_t i = 0; i < atlas.labels.size(); ++i)
    atlas_vol.data[i] = static_cast<float>(atlas.labels[i]);
  nifti::write_file(out_dir / "atlas.nii", atlas_vol);
  write_label_table(out_dir / "atlas.labels.csv", atlas.label_table);

  write_manifest(out_dir, "phantom", seed, s,
                 {"manifest.csv", "mask.nii", "truth_typical.nii", "truth_dyslexic.nii",
                  "atlas.nii", "atlas.labels.csv"},
                 {{"subjects", ds.size()}});
  std::cout << "phantom: " << ds.size() << " subjects -> " << out_dir.string() << "\n";
  return 0;
}

int run_train(const Settings& s, const fs::path& data_dir, const fs::path& out_dir,
              std::uint64_t seed, const fs::path& config_dir) {
  Dataset ds = load_dataset_dir(data_dir);
  SplitResult split = split_dataset(ds, split_fractions_from(s), seed);
  const ArchitectureSpec spec = arch_from(s, config_dir, ds.mask.dims);

  TrainConfig cfg;
  cfg.learning_rate = static_cast<float>(s.num("train.lr", 0.001));
  cfg.drop_p = static_cast<float>(s.num("train.drop", 0.5));
  cfg.epochs = s.integer("train.epochs", 30);
  cfg.batch_size = s.integer("train.batch", 16);
  cfg.fc_units = s.integer("train.fc_units", 32);
  cfg.seed = seed;

  TrainResult r = train(spec, split.train, split.val, cfg, augment_from(s, seed));

  fs::create_directories(out_dir);
  save_model(out_dir, r.model);
  write_text(out_dir / "history.csv", history_to_csv(r.history));
  const double test_acc = evaluate(r.model, split.test);
  write_manifest(out_dir, "train", seed, s, {"arch.cfg", "params.bin", "history.csv"},
                 {{"best_epoch", r.best_epoch},
                  {"best_val_acc", r.best_val_acc},
                  {"test_acc", test_acc},
                  {"param_count", param_count(r.model)}});
  std::cout << "train: best epoch " << r.best_epoch << ", val " << r.best_val_acc << ", test "
            << test_acc << " -> " << out_dir.string() << "\n";
  return 0;
}

int run_search(const Settings& s, const fs::path& data_dir, const fs::path& out_dir,
               std::uint64_t seed, const fs::path& config_dir) {
  Dataset ds = load_dataset_dir(data_dir);
  SplitResult split = split_dataset(ds, split_fractions_from(s), seed);
  fs::create_directories(out_dir);

  const std::string method = s.str("search.method", "ggp");
  if (method == "grid") {
    HyperGrid grid;
    std::vector<TrainConfig> cells = grid.expand(seed);
    const int limit = s.integer("search.grid_limit", 0);
    if (limit > 0 && static_cast<int>(cells.size()) > limit) cells.resize(limit);
    auto builder = [&](const TrainConfig& c) {
      ArchitectureSpec spec =
          lenet5_modified_spec({ds.mask.dims[2], ds.mask.dims[1], ds.mask.dims[0]}, c.fc_units);
      for (auto& l : spec.layers)
        if (l.kind == LayerKind::dropout) l.drop_p = c.drop_p;
      return spec;
    };
    GridSearchResult r = grid_search(builder, split.train, split.val, cells);
    write_text(out_dir / "leaderboard.csv", leaderboard_to_csv(r.leaderboard));
    write_manifest(out_dir, "search", seed, s, {"leaderboard.csv"},
                   {{"best_config", r.best.describe()},
                    {"best_val_acc", r.leaderboard.front().val_acc}});
    std::cout << "grid search: best " << r.best.describe() << " val "
              << r.leaderboard.front().val_acc << "\n";
    return 0;
  }

  require(method == "ggp", Errc::config_error, "search.method must be 'ggp' or 'grid'");
  Grammar grammar = default_search_grammar();
  const std::string grammar_path = s.str("grammar", "");
  if (!grammar_path.empty()) {
    std::ifstream in(config_dir.empty() ? fs::path(grammar_path) : config_dir / grammar_path);
    require(in.good(), Errc::config_error, "cannot open grammar " + grammar_path);
    std::stringstream text;
    text << in.rdbuf();
    grammar = Grammar::parse(text.str());
  }

  EvolutionConfig ec;
  ec.population_size = s.integer("evolve.population", ec.population_size);
  ec.generations = s.integer("evolve.generations", ec.generations);
  ec.crossover_rate = static_cast<float>(s.num("evolve.crossover", ec.crossover_rate));
  ec.mutation_rate = static_cast<float>(s.num("evolve.mutation", ec.mutation_rate));
  ec.tournament_size = s.integer("evolve.tournament", ec.tournament_size);
  ec.elitism_count = s.integer("evolve.elitism", ec.elitism_count);
  ec.fitness_epochs = s.integer("evolve.fitness_epochs", ec.fitness_epochs);
  ec.genome_length = s.integer("evolve.genome_length", ec.genome_length);
  ec.seed = seed;

  EvolutionResult r = evolve(grammar, split.train, split.val, ec);
  write_text(out_dir / "evolution_log.csv", evolution_log_to_csv(r.log));
  write_text(out_dir / "best_genome.txt", genome_to_text(r.best_genome));
  const BrainVolume& v0 = split.train.items.front().volume;
  const DerivedIndividual best =
      derive_architecture(r.best_genome, grammar, {v0.nz(), v0.ny(), v0.nx()});
  write_text(out_dir / "best_arch.cfg", arch_to_text(best.spec));
  write_manifest(out_dir, "search", seed, s,
                 {"evolution_log.csv", "best_genome.txt", "best_arch.cfg"},
                 {{"best_fitness", r.best_fitness},
                  {"best_lr", best.learning_rate},
                  {"trained", r.fitness_stats.trained},
                  {"memo_hits", r.fitness_stats.memo_hits},
                  {"invalid", r.fitness_stats.invalid}});
  std::cout << "ggp search: best fitness " << r.best_fitness << " -> " << out_dir.string()
            << "\n";
  return 0;
}

int run_svm(const Settings& s, const fs::path& data_dir, const fs::path& out_dir,
            std::uint64_t seed) {
  Dataset ds = load_dataset_dir(data_dir);
  SplitResult split = split_dataset(ds, split_fractions_from(s), seed);
  fs::create_directories(out_dir);

  std::vector<float> c_grid;
  for (const auto& tok : split_ws(s.str("svm.c_grid", "0.01 0.1 1 10 100")))
    c_grid.push_back(std::stof(tok));
  const int epochs = s.integer("svm.epochs", 20);

  float best_c = c_grid.front();
  double best_val = -1.0;
  for (float c : c_grid) {
    SvmModel m = train_svm(split.train, c, epochs, seed);
    const double val = evaluate(m, split.val);
    if (val > best_val) {
      best_val = val;
      best_c = c;
    }
  }
  SvmModel final_model = train_svm(split.train, best_c, epochs, seed);
  const double test_acc = evaluate(final_model, split.test);

  const auto blob = svm_to_bytes(final_model);
  std::ofstream bin(out_dir / "svm.bin", std::ios::binary | std::ios::trunc);
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  write_text(out_dir / "summary.txt", summary_table({{"SVM", test_acc}}));
  write_manifest(out_dir, "svm", seed, s, {"svm.bin", "summary.txt"},
                 {{"best_C", best_c}, {"val_acc", best_val}, {"test_acc", test_acc}});
  std::cout << summary_line("SVM", test_acc) << "\n";
  return 0;
}

int run_eval(const Settings& s, const fs::path& model_dir, const fs::path& data_dir,
             const std::string& split_name, const fs::path& out_dir, std::uint64_t seed) {
  Dataset ds = load_dataset_dir(data_dir);
  SplitResult split = split_dataset(ds, split_fractions_from(s), seed);
  const Dataset* chosen = &split.test;
  if (split_name == "train") chosen = &split.train;
  else if (split_name == "val") chosen = &split.val;
  else require(split_name == "test", Errc::config_error, "--split must be train, val, or test");

  Model model = load_model(model_dir);
  model.set_mode(Mode::eval);
  const double acc = evaluate(model, *chosen);
  const std::string technique = model.spec.is_3d() ? "Modified LeNet-5 3D" : "Modified LeNet-5";
  const std::string table = summary_table({{technique, acc}});
  std::cout << table;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(out_dir / "summary.txt", table);
    write_manifest(out_dir, "eval", seed, s, {"summary.txt"},
                   {{"split", split_name}, {"accuracy", acc}});
  }
  return 0;
}

int run_explain(const Settings& s, const fs::path& model_dir, const fs::path& data_dir,
                const std::string& subject_id, const std::string& cls, const std::string& mode,
                const std::string& atlas_path, double topq, bool emit_png,
                const fs::path& out_dir, std::uint64_t seed) {
  Dataset ds = load_dataset_dir(data_dir);
  const Subject* subject = nullptr;
  for (const auto& item : ds.items)
    if (item.id == subject_id) subject = &item;
  require(subject != nullptr, Errc::config_error,
          "subject '" + subject_id + "' not in " + (data_dir / "manifest.csv").string());

  Model model = load_model(model_dir);
  model.set_mode(Mode::eval);
  const int target = class_arg_to_index(cls);
  const RelevanceMode rmode = mode_arg_to_mode(mode);
  const BrainVolume masked = apply_mask(subject->volume, ds.mask);
  const Heatmap3D heat = relevance_volume(model, masked, target, rmode);

  fs::create_directories(out_dir);
  nifti::write_file(out_dir / "heatmap.nii",
                    heat.to_volume(subject->volume.spacing, subject->volume.affine));
  std::vector<std::string> outputs{"heatmap.nii"};
  json extra{{"subject", subject_id}, {"class", cls}, {"mode", mode}};

  if (!atlas_path.empty()) {
    const AtlasVolume atlas = load_atlas_arg(atlas_path);
    const auto thr = threshold_heatmap(heat, ds.mask, topq);
    const RegionReport report = region_voxel_counts(thr, heat.dims, atlas, topq);
    write_text(out_dir / "regions.csv", region_report_to_csv(report));
    const PeakTable peaks = peak_coordinates(heat, subject->volume.affine, atlas, 5, cls);
    write_text(out_dir / "peaks.csv", peak_table_to_csv(peaks));
    outputs.push_back("regions.csv");
    outputs.push_back("peaks.csv");
    extra["thresholded_voxels"] = report.total_voxels;
  }
  if (emit_png) {
    png::write_heatmap_strip(out_dir / "slices.png", subject->volume, heat, 5, 0.5f);
    outputs.push_back("slices.png");
  }
  write_manifest(out_dir, "explain", seed, s, outputs, extra);
  std::cout << "explain: " << subject_id << " class " << cls << " mode " << mode << " -> "
            << out_dir.string() << "\n";
  return 0;
}

int run_report(const Settings& s, const fs::path& heatmap_path, const fs::path& mask_path,
               const std::string& atlas_path, double topq, const fs::path& out_dir,
               std::uint64_t seed) {
  const BrainVolume heat_vol = nifti::read_file(heatmap_path);
  Heatmap3D heat;
  heat.dims = heat_vol.dims;
  heat.data = heat_vol.data;
  heat.normalize();
  const BrainMask mask = BrainMask::from_volume(nifti::read_file(mask_path));
  const AtlasVolume atlas = load_atlas_arg(atlas_path);

  const auto thr = threshold_heatmap(heat, mask, topq);
  const RegionReport report = region_voxel_counts(thr, heat.dims, atlas, topq);
  const PeakTable peaks = peak_coordinates(heat, heat_vol.affine, atlas, 5);

  fs::create_directories(out_dir);
  BrainVolume thr_vol = BrainVolume::zeros(heat.dims, heat_vol.spacing, heat_vol.affine);
  for (std::size_t i = 0; i < thr.size(); ++i) thr_vol.data[i] = static_cast<float>(thr[i]);
  nifti::write_file(out_dir / "thresholded_mask.nii", thr_vol);
  write_text(out_dir / "regions.csv", region_report_to_csv(report));
  write_text(out_dir / "peaks.csv", peak_table_to_csv(peaks));
  write_text(out_dir / "report.txt",
             region_report_to_text(report) + "\n" + peak_table_to_text(peaks));
  write_manifest(out_dir, "report", seed, s,
                 {"thresholded_mask.nii", "regions.csv", "peaks.csv", "report.txt"},
                 {{"thresholded_voxels", report.total_voxels}});
  std::cout << "report: " << report.rows.size() << " regions, " << peaks.rows.size()
            << " peaks -> " << out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxcam: volumetric CNN classification with visual explanations"};
  app.require_subcommand(1);

  std::string data_dir, mask_path, atlas_path, config_path, out_dir, model_dir;
  std::string cls = "dyslexic", mode = "slicegrad", subject_id, split_name = "test";
  std::string heatmap_path;
  double topq = 0.05;
  bool emit_png = false;
  std::uint64_t seed = 1234;

  auto add_common = [&](CLI::App* cmd, bool needs_out) {
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--seed", seed, "run seed (default 1234)");
    auto* out = cmd->add_option("--out", out_dir, "output directory");
    if (needs_out) out->required();
  };

  CLI::App* phantom = app.add_subcommand("phantom", "generate a synthetic two-class dataset");
  add_common(phantom, true);

  CLI::App* train_cmd = app.add_subcommand("train", "train a CNN on a dataset directory");
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--mask", mask_path, "brain mask (default <data>/mask.nii)");
  add_common(train_cmd, true);

  CLI::App* search = app.add_subcommand("search", "architecture/hyperparameter search");
  search->add_option("--data", data_dir, "dataset directory")->required();
  add_common(search, true);

  CLI::App* svm_cmd = app.add_subcommand("svm", "train the linear SVM baseline");
  svm_cmd->add_option("--data", data_dir, "dataset directory")->required();
  add_common(svm_cmd, true);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a trained model");
  eval_cmd->add_option("--model", model_dir, "model checkpoint directory")->required();
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--split", split_name, "train|val|test (default test)");
  add_common(eval_cmd, false);

  CLI::App* explain = app.add_subcommand("explain", "relevance heatmap for one subject");
  explain->add_option("--model", model_dir, "model checkpoint directory")->required();
  explain->add_option("--data", data_dir, "dataset directory")->required();
  explain->add_option("--subject", subject_id, "subject id from the manifest")->required();
  explain->add_option("--class", cls, "typical|dyslexic (default dyslexic)");
  explain->add_option("--mode", mode, "replicate|slicegrad|3d (default slicegrad)");
  explain->add_option("--atlas", atlas_path, "atlas volume (labels at <atlas>.labels.csv)");
  explain->add_option("--topq", topq, "top relevance fraction (default 0.05)");
  explain->add_flag("--png", emit_png, "also write a color-coded slice strip");
  add_common(explain, true);

  CLI::App* report = app.add_subcommand("report", "region report from a heatmap volume");
  report->add_option("--data", heatmap_path, "heatmap NIfTI volume")->required();
  report->add_option("--mask", mask_path, "brain mask NIfTI")->required();
  report->add_option("--atlas", atlas_path, "atlas volume (labels at <atlas>.labels.csv)")
      ->required();
  report->add_option("--topq", topq, "top relevance fraction (default 0.05)");
  add_common(report, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    std::cerr << "usage error; run 'voxcam --help' or 'voxcam <subcommand> --help'\n";
    return 1;
  }

  try {
    Settings settings;
    fs::path config_dir;
    if (!config_path.empty()) {
      settings.kv = read_config_file(config_path);
      config_dir = fs::path(config_path).parent_path();
    }
    if (phantom->parsed()) return run_phantom(settings, out_dir, seed);
    if (train_cmd->parsed()) return run_train(settings, data_dir, out_dir, seed, config_dir);
    if (search->parsed()) return run_search(settings, data_dir, out_dir, seed, config_dir);
    if (svm_cmd->parsed()) return run_svm(settings, data_dir, out_dir, seed);
    if (eval_cmd->parsed())
      return run_eval(settings, model_dir, data_dir, split_name, out_dir, seed);
    if (explain->parsed())
      return run_explain(settings, model_dir, data_dir, subject_id, cls, mode, atlas_path, topq,
                         emit_png, out_dir, seed);
    if (report->parsed())
      return run_report(settings, heatmap_path, mask_path, atlas_path, topq, out_dir, seed);
    std::cerr << "no subcommand given; run 'voxcam --help'\n";
    return 1;
  } catch (const Error& e) {
    if (e.code() == Errc::config_error) {
      std::cerr << "config error: " << e.what()
                << "\ncheck the flag values and config file keys\n";
      return 1;
    }
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
