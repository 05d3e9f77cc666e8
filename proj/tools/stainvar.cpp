/*
 * Copyright 2026 The stainvar Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// stainvar: staged command-line driver.
//
//   stainvar gen-data
//   stainvar train-vqvae --modality he|ihc
//   stainvar train-translator
//   stainvar train-var
//   stainvar infer [--split eval | --input x.ppm --output y.ppm]
//   stainvar eval  --pred DIR [--ref DIR | --split eval]
//   stainvar score [--patches rows.csv | --pred DIR --split eval]
//   stainvar ablate
//   stainvar inspect-tokens --file tokens.svtp
//
// Exit codes: 0 ok, 1 configuration or usage error, 2 missing or mismatched
// prerequisite, 3 numeric failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "stainvar/ablation.hpp"
#include "stainvar/checkpoint.hpp"
#include "stainvar/config.hpp"
#include "stainvar/error.hpp"
#include "stainvar/image_metrics.hpp"
#include "stainvar/pipeline.hpp"
#include "stainvar/runtime.hpp"
#include "stainvar/rvq.hpp"
#include "stainvar/scoring.hpp"
#include "stainvar/synthetic.hpp"
#include "stainvar/tensor_bridge.hpp"

namespace fs = std::filesystem;
using namespace stainvar;

namespace {

struct Globals {
  std::string config_path;
  std::string work = "work";
  std::string data;
  long long seed = -1;
  bool quiet = false;
};

PipelineConfig load(const Globals& g) {
  auto c = g.config_path.empty() ? PipelineConfig::defaults() : load_config(g.config_path);
  if (g.seed >= 0) {
    c.seed = static_cast<std::uint64_t>(g.seed);
    c.finalize();
  }
  configure_runtime(c.seed);
  return c;
}

fs::path data_dir(const Globals& g) { return g.data.empty() ? fs::path(g.work) / "data" : fs::path(g.data); }

ProgressFn logger(const Globals& g) {
  if (g.quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

std::vector<SyntheticPair> load_split(const Globals& g, const std::string& split) {
  const auto dir = data_dir(g);
  if (!fs::exists(dir / "dataset.json")) {
    throw MissingPrerequisiteError("missing dataset under " + dir.string() + " (run gen-data)");
  }
  return read_split(dir, split);
}

std::string pair_name(std::size_t i, const char* suffix) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "pair_%04zu_%s", i, suffix);
  return buf;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// --- stages ----------------------------------------------------------------

void cmd_gen_data(const Globals& g) {
  auto c = load(g);
  const auto dir = data_dir(g);
  write_dataset(dir, c.data);
  std::map<std::string, fs::path> artifacts{{"dataset", dir / "dataset.json"}};
  write_json(dir / "manifest.json", make_manifest("gen-data", c, artifacts));
  std::cout << "wrote " << c.data.train_pairs << " train and " << c.data.eval_pairs
            << " eval pairs to " << dir.string() << '\n';
}

void cmd_train_vqvae(const Globals& g, const std::string& modality) {
  auto c = load(g);
  const auto pairs = load_split(g, "train");
  const fs::path work = g.work;
  const auto images = stack_images(pairs, modality == "ihc");
  VqTrainResult result;
  auto vq = train_vq_stage(c, images, stage_seed(c.seed, modality == "he" ? 1 : 2), &result,
                           logger(g));
  const auto path = work / (modality == "he" ? kVqHeFile : kVqIhcFile);
  fs::create_directories(work);
  save_checkpoint(vq_checkpoint(vq, c, modality), path);
  result.curve.write_csv((work / ("vq_" + modality + "_loss.csv")).string());
  write_json(work / ("vq_" + modality + ".manifest.json"),
             make_manifest("train-vqvae --modality " + modality, c, {{"vq_" + modality, path}}));
  std::cout << "saved " << path.string() << " (" << result.steps << " steps, codebook hash "
            << vq.model->codebook_hash() << ")\n";
}

void cmd_train_translator(const Globals& g) {
  auto c = load(g);
  const fs::path work = g.work;
  auto he = load_vq_stage(work, "he");
  auto ihc = load_vq_stage(work, "ihc");
  const auto pairs = load_split(g, "train");
  TranslatorTrainResult result;
  auto net = train_translator_stage(c, he, ihc, stack_images(pairs, false),
                                    stack_images(pairs, true), {}, stage_seed(c.seed, 3),
                                    &result, logger(g));
  const auto path = work / kTranslatorFile;
  save_checkpoint(translator_checkpoint(*net, he, ihc, c), path);
  result.curve.write_csv((work / "translator_loss.csv").string());
  write_json(work / "translator.manifest.json",
             make_manifest("train-translator", c,
                           {{"vq_he", work / kVqHeFile},
                            {"vq_ihc", work / kVqIhcFile},
                            {"translator", path}}));
  std::cout << "saved " << path.string() << " (" << result.steps << " steps)\n";
}

void cmd_train_var(const Globals& g) {
  auto c = load(g);
  const fs::path work = g.work;
  auto he = load_vq_stage(work, "he");
  auto ihc = load_vq_stage(work, "ihc");
  auto translator = load_translator_stage(work, he, ihc);
  const auto pairs = load_split(g, "train");
  auto stage = train_var_stage(c, he, ihc, *translator, stack_images(pairs, false),
                               stack_images(pairs, true), {}, stage_seed(c.seed, 4), logger(g));
  const auto path = work / kVarFile;
  save_checkpoint(var_checkpoint(stage, *translator, he, ihc, c), path);
  stage.result.curve.write_csv((work / "var_loss.csv").string());
  std::ostringstream ce;
  ce << "scale,initial_ce,final_ce\n";
  for (std::size_t k = 0; k < stage.result.final_scale_ce.size(); ++k) {
    ce << k + 1 << ',' << fmt(stage.result.initial_scale_ce[k]) << ','
       << fmt(stage.result.final_scale_ce[k]) << '\n';
  }
  write_text(work / "var_scale_ce.csv", ce.str());
  write_json(work / "var.manifest.json",
             make_manifest("train-var", c,
                           {{"vq_he", work / kVqHeFile},
                            {"vq_ihc", work / kVqIhcFile},
                            {"translator", work / kTranslatorFile},
                            {"var", path}}));
  std::cout << "saved " << path.string() << " (" << stage.result.steps << " steps)\n";
}

// --- inference and reports -------------------------------------------------

TokenPyramid pyramid_of(const std::vector<torch::Tensor>& tokens, std::int64_t n,
                        const PipelineModels& m) {
  std::vector<IndexGrid> grids;
  for (const auto& t : tokens) grids.push_back(index_grid_from_tensor(t[n]));
  return TokenPyramid(m.var->config().schedule, std::move(grids), m.ihc.model->codebook_hash());
}

void cmd_infer(const Globals& g, const std::string& split, const std::string& input,
               const std::string& output, const std::string& out_dir, bool save_tokens) {
  auto c = load(g);
  auto m = load_pipeline(g.work);
  if (!input.empty()) {
    if (output.empty()) throw ConfigError("output", "--output is required with --input");
    const auto x = to_tensor(read_ppm(input)).unsqueeze(0);
    std::vector<torch::Tensor> tokens;
    auto y = infer_batch(m, x, c.sampling, c.seed, &tokens);
    write_ppm(output, image_from_tensor(y[0]));
    if (save_tokens) {
      write_file_bytes(fs::path(output).replace_extension(".svtp"),
                       serialize_pyramid(pyramid_of(tokens, 0, m)));
    }
    std::cout << "wrote " << output << '\n';
    return;
  }
  const auto pairs = load_split(g, split);
  const fs::path dir = out_dir.empty() ? fs::path(g.work) / ("pred_" + split) : fs::path(out_dir);
  fs::create_directories(dir);
  std::vector<torch::Tensor> tokens;
  auto y = infer_batch(m, stack_images(pairs, false), c.sampling, c.seed, &tokens);
  std::map<std::string, fs::path> artifacts;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto path = dir / (pair_name(i, "pred") + ".ppm");
    write_ppm(path, image_from_tensor(y[static_cast<std::int64_t>(i)]));
    if (save_tokens) {
      write_file_bytes(dir / (pair_name(i, "pred") + ".svtp"),
                       serialize_pyramid(pyramid_of(tokens, static_cast<std::int64_t>(i), m)));
    }
  }
  artifacts["var"] = fs::path(g.work) / kVarFile;
  write_json(dir / "manifest.json", make_manifest("infer --split " + split, c, artifacts));
  std::cout << "wrote " << pairs.size() << " predictions to " << dir.string() << '\n';
}

struct ImagePair {
  std::string name;
  Image pred;
  Image ref;
};

std::vector<ImagePair> collect_pairs(const Globals& g, const std::string& pred_dir,
                                     const std::string& ref_dir, const std::string& split) {
  if (pred_dir.empty()) throw ConfigError("pred", "--pred is required");
  if (!fs::is_directory(pred_dir)) {
    throw MissingPrerequisiteError("missing prediction directory " + pred_dir);
  }
  std::vector<ImagePair> out;
  if (!ref_dir.empty()) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(pred_dir)) {
      if (e.path().extension() == ".ppm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto ref = fs::path(ref_dir) / f.filename();
      if (!fs::exists(ref)) throw MissingPrerequisiteError("missing reference " + ref.string());
      out.push_back({f.filename().string(), read_ppm(f), read_ppm(ref)});
    }
  } else {
    const auto pairs = load_split(g, split);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto f = fs::path(pred_dir) / (pair_name(i, "pred") + ".ppm");
      if (!fs::exists(f)) throw MissingPrerequisiteError("missing prediction " + f.string());
      out.push_back({f.filename().string(), read_ppm(f), pairs[i].x_ihc});
    }
  }
  if (out.empty()) throw MissingPrerequisiteError("no images found in " + pred_dir);
  return out;
}

void cmd_eval(const Globals& g, const std::string& pred_dir, const std::string& ref_dir,
              const std::string& split, const std::string& out_path) {
  auto c = load(g);
  auto pairs = collect_pairs(g, pred_dir, ref_dir, split);
  std::vector<Image> pred, ref;
  for (const auto& p : pairs) {
    pred.push_back(p.pred);
    ref.push_back(p.ref);
  }
  const auto q = image_quality(pred, ref);
  std::ostringstream csv;
  csv << "image,psnr,ssim,proxy\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    csv << pairs[i].name << ',' << fmt(q.psnr[i]) << ',' << fmt(q.ssim[i]) << ','
        << fmt(q.proxy[i]) << '\n';
  }
  csv << "mean," << fmt(q.mean_psnr) << ',' << fmt(q.mean_ssim) << ',' << fmt(q.mean_proxy)
      << '\n';
  const fs::path out = out_path.empty() ? fs::path(pred_dir) / "eval.csv" : fs::path(out_path);
  write_text(out, csv.str());
  std::cout << "psnr " << fmt(q.mean_psnr) << "  ssim " << fmt(q.mean_ssim) << "  proxy "
            << fmt(q.mean_proxy) << "  (" << out.string() << ")\n";
}

void cmd_score(const Globals& g, const std::string& patches, const std::string& pred_dir,
               const std::string& split, const std::string& out_dir) {
  auto c = load(g);
  std::vector<PatchRow> rows;
  fs::path out = out_dir;
  if (!patches.empty()) {
    std::ifstream in(patches);
    if (!in) throw MissingPrerequisiteError("missing patch table " + patches);
    rows = read_patch_csv(in);
    if (out.empty()) out = fs::path(patches).parent_path();
  } else {
    auto pairs = load_split(g, split);
    auto images = collect_pairs(g, pred_dir, "", split);
    std::vector<Image> pred;
    for (const auto& p : images) pred.push_back(p.pred);
    rows = patch_rows_from_images(pairs, pred, c.data.params.thresholds);
    if (out.empty()) out = pred_dir;
  }
  const auto report = score_rows(rows, c.data.params.thresholds);
  fs::create_directories(out.empty() ? fs::path(".") : out);
  std::ofstream rec(out / "score_records.csv"), sum(out / "score_summary.csv");
  write_score_records_csv(report, rec);
  write_score_summary_csv(report, sum);
  write_score_summary_csv(report, std::cout);
}

void cmd_ablate(const Globals& g, const std::string& out_dir) {
  auto c = load(g);
  const auto train = load_split(g, "train");
  const auto eval = load_split(g, "eval");
  std::vector<StageTiming> timings;
  const auto report = run_ablation(c, train, eval, logger(g), &timings);
  const fs::path out = out_dir.empty() ? fs::path(g.work) / "ablation" : fs::path(out_dir);
  fs::create_directories(out);
  std::ostringstream csv;
  report.write_csv(csv);
  write_text(out / "ablation.csv", csv.str());
  std::ostringstream summary;
  summary << report.summary();
  const std::vector<std::string> checked = {"w/o L_LSA", "w/o L_ISA", "w/o VAR",
                                            "w/o multi-scale", "w/o registration"};
  for (const auto& o : report.orderings(checked)) {
    summary << "full >= " << o.arm << ": " << (o.holds ? "holds" : "violated") << " ("
            << fmt(o.full_median) << " vs " << fmt(o.arm_median) << ")\n";
  }
  write_text(out / "summary.txt", summary.str());
  std::ostringstream t;
  t << "stage,seconds\n";
  for (const auto& s : timings) t << s.label << ',' << fmt(s.seconds) << '\n';
  write_text(out / "timings.csv", t.str());
  write_json(out / "manifest.json", make_manifest("ablate", c, {{"ablation", out / "ablation.csv"}}));
  std::cout << summary.str();
}

void cmd_inspect_tokens(const std::string& file, int vocab) {
  if (!fs::exists(file)) throw MissingPrerequisiteError("missing token file " + file);
  const auto bytes = read_file_bytes(file);
  const auto p = deserialize_pyramid(bytes, vocab > 0 ? std::optional<int>(vocab) : std::nullopt);
  std::cout << "schedule " << p.schedule().to_string() << "\ncodebook hash " << p.codebook_hash()
            << "\nmax index " << p.max_index() << '\n';
  for (std::size_t k = 0; k < p.depth(); ++k) {
    const auto& grid = p.grid(k);
    std::set<std::int32_t> distinct(grid.indices.begin(), grid.indices.end());
    std::cout << "scale " << k + 1 << ' ' << grid.h << 'x' << grid.w << "  distinct "
              << distinct.size() << '\n';
    if (grid.h * grid.w <= 16) {
      for (int y = 0; y < grid.h; ++y) {
        std::cout << "   ";
        for (int x = 0; x < grid.w; ++x) std::cout << ' ' << grid.at(y, x);
        std::cout << '\n';
      }
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stainvar: H&E to IHC virtual staining with multi-scale token synthesis"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "JSON configuration (defaults when omitted)");
  app.add_option("-w,--work", g.work, "Working directory for checkpoints and reports");
  app.add_option("-d,--data", g.data, "Dataset directory (default: <work>/data)");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic paired dataset");

  std::string modality;
  auto* vq = app.add_subcommand("train-vqvae", "Stage a: train one modality's VQ-VAE");
  vq->add_option("--modality", modality, "he or ihc")
      ->required()
      ->check(CLI::IsMember({"he", "ihc"}));

  auto* tr = app.add_subcommand("train-translator", "Stage b: train the latent translator");
  auto* var = app.add_subcommand("train-var", "Stage c: train the autoregressive model");

  std::string split = "eval", input, output, out_dir;
  bool save_tokens = false;
  auto* inf = app.add_subcommand("infer", "Synthesize IHC images");
  inf->add_option("--split", split, "Dataset split to synthesize")
      ->check(CLI::IsMember({"train", "eval"}));
  inf->add_option("--input", input, "Single H&E image (PPM)");
  inf->add_option("--output", output, "Output path for --input");
  inf->add_option("--out", out_dir, "Output directory for --split");
  inf->add_flag("--tokens", save_tokens, "Also write the generated token pyramids");

  std::string pred_dir, ref_dir, report_path;
  auto* ev = app.add_subcommand("eval", "PSNR, SSIM and proxy distance of predictions");
  ev->add_option("--pred", pred_dir, "Directory of predicted images")->required();
  ev->add_option("--ref", ref_dir, "Directory of same-named reference images");
  ev->add_option("--split", split, "Dataset split used as reference when --ref is absent")
      ->check(CLI::IsMember({"train", "eval"}));
  ev->add_option("--report", report_path, "Output CSV (default: <pred>/eval.csv)");

  std::string patches;
  auto* sc = app.add_subcommand("score", "Clinical scores and agreement metrics");
  sc->add_option("--patches", patches, "Patch table CSV");
  sc->add_option("--pred", pred_dir, "Directory of predicted IHC images");
  sc->add_option("--split", split, "Dataset split of the predictions")
      ->check(CLI::IsMember({"train", "eval"}));
  sc->add_option("--out", out_dir, "Output directory");

  auto* ab = app.add_subcommand("ablate", "Run the ablation arms over all configured seeds");
  ab->add_option("--out", out_dir, "Output directory (default: <work>/ablation)");

  std::string token_file;
  int vocab = 0;
  auto* it = app.add_subcommand("inspect-tokens", "Print a token pyramid file");
  it->add_option("--file", token_file, "Token pyramid file")->required();
  it->add_option("--vocab", vocab, "Reject indices at or above this vocabulary size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) cmd_gen_data(g);
    else if (*vq) cmd_train_vqvae(g, modality);
    else if (*tr) cmd_train_translator(g);
    else if (*var) cmd_train_var(g);
    else if (*inf) cmd_infer(g, split, input, output, out_dir, save_tokens);
    else if (*ev) cmd_eval(g, pred_dir, ref_dir, split, report_path);
    else if (*sc) cmd_score(g, patches, pred_dir, split, out_dir);
    else if (*ab) cmd_ablate(g, out_dir);
    else if (*it) cmd_inspect_tokens(token_file, vocab);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const MissingPrerequisiteError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const HashMismatchError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
