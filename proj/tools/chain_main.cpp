#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chain/ap.hpp"
#include "chain/checkpoint.hpp"
#include "chain/config.hpp"
#include "chain/corpus.hpp"
#include "chain/errors.hpp"
#include "chain/eval.hpp"
#include "chain/plot.hpp"
#include "chain/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainFlags {
  std::string config_path;
  std::string corpus;
  std::string out;
  std::uint64_t seed = 0;
  int bits = 0, frames = 0, batch = 0, epochs = -1;
  bool disable_order = false, disable_scene = false;
  bool disable_spatial = false, disable_temporal = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file (flags override file values)");
  cmd->add_option("--corpus", f.corpus, "Corpus manifest (manifest.jsonl)");
  cmd->add_option("--out", f.out, "Run output directory");
  cmd->add_option("--seed", f.seed, "Training seed");
  cmd->add_option("--bits", f.bits, "Hash code length K");
  cmd->add_option("--frames", f.frames, "Clip length T");
  cmd->add_option("--batch", f.batch, "Batch size B");
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_flag("--disable-order", f.disable_order, "Drop the frame order verification task");
  cmd->add_flag("--disable-scene", f.disable_scene, "Drop the scene change regularization task");
  cmd->add_flag("--disable-spatial-aug", f.disable_spatial, "Identity spatial augmentation");
  cmd->add_flag("--disable-temporal-aug", f.disable_temporal,
                "Deterministic mid-segment frame sampling");
}

chain::RunConfig resolve_run_config(const CLI::App* cmd, const TrainFlags& f) {
  chain::RunConfig cfg;
  if (!f.config_path.empty()) cfg = chain::load_run_config(f.config_path);
  if (cmd->count("--corpus")) cfg.corpus = f.corpus;
  if (cmd->count("--out")) cfg.out = f.out;
  if (cmd->count("--seed")) cfg.train.seed = f.seed;
  if (cmd->count("--bits")) cfg.train.encoder.code_bits = f.bits;
  if (cmd->count("--frames")) cfg.train.encoder.clip_length = f.frames;
  if (cmd->count("--batch")) cfg.train.batch_size = f.batch;
  if (cmd->count("--epochs")) cfg.train.epochs = f.epochs;
  if (f.disable_order) cfg.train.loss.enable_order = false;
  if (f.disable_scene) cfg.train.loss.enable_scene = false;
  if (f.disable_spatial) cfg.train.spatial_aug = false;
  if (f.disable_temporal) cfg.train.temporal_aug = false;
  if (cfg.corpus.empty()) throw chain::ArgumentError("train: no corpus given (--corpus or config)");
  return cfg;
}

int run_train(const CLI::App* cmd, const TrainFlags& f) {
  chain::RunConfig cfg = resolve_run_config(cmd, f);
  std::cout << "config=" << chain::run_config_to_json(cfg).dump() << "\n";
  chain::Manifest manifest = chain::load_manifest(cfg.corpus);
  chain::FitResult result = chain::fit(manifest, cfg.train, cfg.out, std::cout);
  std::cout << "done checkpoint=" << (fs::path(cfg.out) / "model.chnc").string()
            << " steps=" << result.global_step << "\n";
  return 0;
}

int run_encode(const std::string& checkpoint, const std::string& corpus, const std::string& out) {
  chain::Checkpoint ckpt = chain::load_checkpoint(checkpoint);
  chain::Manifest manifest = chain::load_manifest(corpus);
  chain::CodeBook book = chain::encode_corpus(ckpt.model, manifest, std::cout);
  chain::write_codebook(out, book);
  std::cout << "done codes=" << out << " n=" << book.size() << " bits=" << book.bits << "\n";
  return 0;
}

int run_eval(const std::string& codes, const std::string& queries, const std::vector<int>& ks,
             const std::string& out_csv, const std::string& pr_csv) {
  chain::CodeBook db = chain::read_codebook(codes);
  chain::CodeBook q = queries.empty() ? db : chain::read_codebook(queries);
  std::vector<std::pair<int, double>> rows;
  for (int k : ks) rows.emplace_back(k, chain::map_at_k(q, db, k));
  std::cout << "metric,K,value\n";
  std::cout.precision(12);
  for (const auto& [k, v] : rows) std::cout << "map," << k << "," << v << "\n";
  if (!out_csv.empty()) chain::write_metrics_csv(out_csv, rows);
  if (!pr_csv.empty()) chain::write_pr_csv(pr_csv, chain::pr_curve(q, db));
  return 0;
}

int run_ablate(const CLI::App* cmd, const TrainFlags& f, const std::vector<std::uint64_t>& seeds,
               int map_k) {
  chain::RunConfig base = resolve_run_config(cmd, f);
  std::error_code ec;
  fs::create_directories(base.out, ec);
  if (ec) throw chain::IoError("ablate: cannot create " + base.out);
  chain::Manifest manifest = chain::load_manifest(base.corpus);

  struct Row {
    std::string config;
    std::uint64_t seed;
    double map;
  };
  const std::vector<std::pair<std::string, std::pair<bool, bool>>> grid = {
      {"CL", {false, false}},
      {"CL+FOV", {true, false}},
      {"CL+SCR", {false, true}},
      {"CL+FOV+SCR", {true, true}},
  };
  std::vector<Row> rows;
  for (const auto& [name, toggles] : grid) {
    for (std::uint64_t seed : seeds) {
      chain::RunConfig cfg = base;
      cfg.train.seed = seed;
      cfg.train.loss.enable_order = toggles.first;
      cfg.train.loss.enable_scene = toggles.second;
      const std::string run_dir =
          (fs::path(base.out) / (name + "_seed" + std::to_string(seed))).string();
      std::ofstream log(run_dir.empty() ? "/dev/null" : run_dir + ".log");
      chain::FitResult result = chain::fit(manifest, cfg.train, run_dir, log);
      chain::CodeBook book = chain::encode_corpus(result.model, manifest, log);
      const double map = chain::map_at_k(book, book, map_k);
      rows.push_back({name, seed, map});
      std::cout << "run config=" << name << " seed=" << seed << " map" << map_k << "=" << map
                << "\n";
    }
  }

  const std::string table = (fs::path(base.out) / "ablation.csv").string();
  std::ofstream out(table, std::ios::trunc);
  if (!out) throw chain::IoError("ablate: cannot write " + table);
  out << "config,seed,map" << map_k << "\n";
  out.precision(12);
  for (const auto& r : rows) out << r.config << "," << r.seed << "," << r.map << "\n";
  for (const auto& [name, toggles] : grid) {
    std::vector<double> vals;
    for (const auto& r : rows)
      if (r.config == name) vals.push_back(r.map);
    std::sort(vals.begin(), vals.end());
    const double median = vals[vals.size() / 2];
    out << name << ",median," << median << "\n";
    std::cout << "median config=" << name << " map" << map_k << "=" << median << "\n";
  }
  std::cout << "done table=" << table << "\n";
  return 0;
}

int run_plot(const std::vector<std::string>& csvs, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw chain::IoError("plot: cannot create " + out_dir);
  std::vector<chain::NamedCurve> curves;
  std::vector<chain::NamedValue> values;
  for (const auto& path : csvs) {
    std::ifstream probe(path);
    if (!probe) throw chain::IoError("plot: cannot open " + path);
    std::string header;
    std::getline(probe, header);
    probe.close();
    const std::string stem = fs::path(path).stem().string();
    if (header == "radius,precision,recall") {
      curves.push_back({stem, chain::read_pr_csv(path)});
    } else if (header == "metric,K,value") {
      for (const auto& [k, v] : chain::read_metrics_csv(path)) values.push_back({stem, k, v});
    } else {
      throw chain::FormatError("plot: unrecognized csv header in " + path);
    }
  }
  if (!curves.empty()) {
    const std::string p = (fs::path(out_dir) / "pr_curves.svg").string();
    chain::write_pr_svg(p, curves);
    std::cout << "wrote " << p << "\n";
  }
  if (!values.empty()) {
    const std::string p = (fs::path(out_dir) / "map_bars.svg").string();
    chain::write_map_bars_svg(p, values);
    std::cout << "wrote " << p << "\n";
  }
  return 0;
}

int run_scenes(const std::string& corpus, const std::string& id, const std::string& checkpoint) {
  chain::Manifest manifest = chain::load_manifest(corpus);
  const chain::VideoRecord* rec = nullptr;
  for (const auto& r : manifest.records)
    if (r.id == id) rec = &r;
  if (!rec) throw chain::ArgumentError("scenes: unknown video id " + id);

  Eigen::MatrixXd points;
  if (!checkpoint.empty()) {
    chain::Checkpoint ckpt = chain::load_checkpoint(checkpoint);
    const int t = ckpt.model.cfg.clip_length;
    chain::Manifest single = manifest;
    single.records = {*rec};
    std::ofstream null_log("/dev/null");
    // frame representations of the deterministic evaluation clip
    chain::FrameSeq video = chain::read_frames(manifest, *rec);
    chain::FrameSeq clip = chain::gather_frames(video, chain::center_clip(video.t, t));
    chain::Mat<float> input(t, static_cast<Eigen::Index>(clip.frame_elems()));
    for (int j = 0; j < t; ++j)
      for (Eigen::Index k = 0; k < input.cols(); ++k) input(j, k) = clip.frame(j)[k];
    chain::Tape<float> tape;
    auto bm = chain::bind_model(tape, ckpt.model, false);
    auto feats = chain::frame_encode(tape, bm, tape.constant(std::move(input)));
    auto [z, frames] = chain::temporal_encode_batch(tape, bm, feats, 1);
    points = frames.value().cast<double>();
  } else {
    // raw-pixel fallback: per-frame 8x8 grayscale thumbnails
    chain::FrameSeq video = chain::read_frames(manifest, *rec);
    const int gh = 8, gw = 8;
    points.resize(video.t, gh * gw);
    for (int t = 0; t < video.t; ++t) {
      const float* fr = video.frame(t);
      for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
          double acc = 0.0;
          int cnt = 0;
          for (int y = gy * video.h / gh; y < (gy + 1) * video.h / gh; ++y)
            for (int x = gx * video.w / gw; x < (gx + 1) * video.w / gw; ++x) {
              for (int c = 0; c < video.c; ++c)
                acc += fr[static_cast<std::size_t>(c) * video.h * video.w + y * video.w + x];
              cnt += video.c;
            }
          points(t, gy * gw + gx) = cnt > 0 ? acc / cnt : 0.0;
        }
    }
  }

  chain::APResult res = chain::cluster_video_frames(points);
  std::cout << "id=" << id << " frames=" << points.rows() << " clusters=" << res.num_clusters()
            << " converged=" << (res.converged ? 1 : 0) << " iterations=" << res.iterations
            << "\n";
  std::cout << "labels=";
  for (std::size_t i = 0; i < res.labels.size(); ++i)
    std::cout << (i ? "," : "") << res.labels[i];
  std::cout << "\nexemplars=";
  for (std::size_t i = 0; i < res.exemplars.size(); ++i)
    std::cout << (i ? "," : "") << res.exemplars[i];
  std::cout << "\n";

  const std::string scenes_path = (fs::path(manifest.base_dir) / "scenes.jsonl").string();
  if (fs::exists(scenes_path)) {
    for (const auto& info : chain::load_scene_info(scenes_path)) {
      if (info.id != id) continue;
      std::cout << "truth=";
      for (int t = 0; t < rec->frame_count; ++t) std::cout << (t ? "," : "") << info.scene_of(t);
      std::cout << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chain: self-supervised video hashing on a synthetic desk-scale corpus.\n"
               "Set CHAIN_NUM_WORKERS to parallelize corpus generation and loading."};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled video corpus");
  chain::GenParams gen;
  synth->add_option("--videos", gen.num_videos, "Number of videos")->required();
  synth->add_option("--classes", gen.num_classes, "Number of classes")->required();
  synth->add_option("--frames", gen.frames_per_video, "Frames per video (L)")->required();
  synth->add_option("--scene-changes", gen.scene_changes, "Background swaps per video");
  synth->add_option("--seed", gen.seed, "Generator seed");
  synth->add_option("--out", gen.out_dir, "Output directory")->required();
  synth->add_option("--height", gen.height, "Frame height");
  synth->add_option("--width", gen.width, "Frame width");
  synth->add_option("--channels", gen.channels, "Frame channels (1 or 3)");
  synth->add_option("--noise", gen.pixel_noise, "Background pixel noise amplitude");

  // train
  auto* train = app.add_subcommand("train", "Train the hashing model");
  TrainFlags tf;
  add_train_flags(train, tf);

  // encode
  auto* encode = app.add_subcommand("encode", "Encode a corpus into binary codes");
  std::string enc_checkpoint, enc_corpus, enc_out = "codes.chnb";
  encode->add_option("--checkpoint", enc_checkpoint, "Trained model checkpoint")->required();
  encode->add_option("--corpus", enc_corpus, "Corpus manifest")->required();
  encode->add_option("--out", enc_out, "Output code file (.chnb)");

  // eval
  auto* eval = app.add_subcommand("eval", "Hamming-ranking retrieval metrics");
  std::string ev_codes, ev_queries, ev_out, ev_pr;
  std::vector<int> ev_ks{5};
  eval->add_option("--codes", ev_codes, "Database code file")->required();
  eval->add_option("--queries", ev_queries, "Query code file (defaults to --codes)");
  eval->add_option("--k", ev_ks, "Retrieval depths for mAP@K");
  eval->add_option("--out", ev_out, "Write metric CSV here");
  eval->add_option("--pr", ev_pr, "Write PR-curve CSV here");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Run the CL/FOV/SCR toggle grid");
  TrainFlags af;
  add_train_flags(ablate, af);
  std::vector<std::uint64_t> ab_seeds{1, 2, 3};
  int ab_k = 5;
  ablate->add_option("--seeds", ab_seeds, "Seeds for each config");
  ablate->add_option("--k", ab_k, "mAP@K depth for the table");

  // plot
  auto* plot = app.add_subcommand("plot", "Render PR curves / mAP bars from metric CSVs");
  std::vector<std::string> plot_csvs;
  std::string plot_out = "plots";
  plot->add_option("csvs", plot_csvs, "Metric or PR CSV files")->required();
  plot->add_option("--out", plot_out, "Output directory for SVG images");

  // scenes
  auto* scenes = app.add_subcommand("scenes", "Dump affinity-propagation scene labels for a video");
  std::string sc_corpus, sc_id, sc_checkpoint;
  scenes->add_option("--corpus", sc_corpus, "Corpus manifest")->required();
  scenes->add_option("--id", sc_id, "Video id")->required();
  scenes->add_option("--checkpoint", sc_checkpoint,
                     "Cluster model frame representations instead of raw thumbnails");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "error=usage message=\"" << e.what() << "\"\n";
    return 2;
  }

  try {
    if (synth->parsed()) {
      chain::Manifest m = chain::generate_synthetic_corpus(gen);
      std::cout << "done manifest=" << (fs::path(gen.out_dir) / "manifest.jsonl").string()
                << " records=" << m.records.size() << " classes=" << m.num_classes << "\n";
      return 0;
    }
    if (train->parsed()) return run_train(train, tf);
    if (encode->parsed()) return run_encode(enc_checkpoint, enc_corpus, enc_out);
    if (eval->parsed()) return run_eval(ev_codes, ev_queries, ev_ks, ev_out, ev_pr);
    if (ablate->parsed()) return run_ablate(ablate, af, ab_seeds, ab_k);
    if (plot->parsed()) return run_plot(plot_csvs, plot_out);
    if (scenes->parsed()) return run_scenes(sc_corpus, sc_id, sc_checkpoint);
  } catch (const chain::ArgumentError& e) {
    std::cerr << "error=argument message=\"" << e.what() << "\"\n";
    return 2;
  } catch (const chain::FormatError& e) {
    std::cerr << "error=format message=\"" << e.what() << "\"\n";
    return 2;
  } catch (const chain::IoError& e) {
    std::cerr << "error=io message=\"" << e.what() << "\"\n";
    return 2;
  } catch (const chain::NumericError& e) {
    std::cerr << "error=numeric message=\"" << e.what() << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error=runtime message=\"" << e.what() << "\"\n";
    return 1;
  }
  return 0;
}
