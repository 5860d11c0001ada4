// panokit command-line tool: panorama stitching, hybrid-attention demos,
// scene annotation, QA filtering and scoring.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "panokit/attention.hpp"
#include "panokit/evalkit.hpp"
#include "panokit/image.hpp"
#include "panokit/matrix.hpp"
#include "panokit/projection.hpp"
#include "panokit/scene.hpp"

namespace {

constexpr const char* kVersion = "panokit 1.0.0";

// Values from a --config JSON file fill in flags the user did not pass.
void merge_config(CLI::App* cmd, const std::string& config_path) {
  if (config_path.empty()) return;
  std::ifstream is(config_path);
  if (!is) throw panokit::ConfigError("config: cannot open " + config_path);
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw panokit::ConfigError("config: " + config_path + " is not a JSON object");
  for (auto& [key, value] : j.items()) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (!opt) throw panokit::ConfigError("config: unknown key '" + key + "'");
    if (opt->count() > 0) continue;  // explicit flag wins
    std::string text = value.is_string() ? value.get<std::string>() : value.dump();
    opt->add_result(text);
    opt->run_callback();
  }
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

void require(bool ok, const std::string& field) {
  if (!ok) throw panokit::ConfigError("missing required option: " + field);
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

// ---- stitch ----

struct StitchArgs {
  std::string rig, images, out, coverage, config;
  std::size_t width = 1024, height = 256;
  double lat_min_deg = -45.0, lat_max_deg = 45.0;
  std::size_t threads = 1;
  bool verbose = false;
};

int run_stitch(const StitchArgs& a) {
  require(!a.rig.empty(), "--rig");
  require(!a.images.empty(), "--images");
  require(!a.out.empty(), "--out");

  std::ifstream rf(a.rig);
  if (!rf) throw panokit::ConfigError("rig: cannot open " + a.rig);
  nlohmann::json rj = nlohmann::json::parse(rf, nullptr, false);
  if (rj.is_discarded()) throw panokit::ConfigError("rig: " + a.rig + " is not valid JSON");
  panokit::CameraRig rig = panokit::rig_from_json(rj);

  std::vector<panokit::RgbImage> imgs;
  for (const auto& path : split_csv(a.images)) imgs.push_back(panokit::read_ppm(path));

  panokit::PanoramaSpec spec;
  spec.width = a.width;
  spec.height = a.height;
  spec.lat_min = deg2rad(a.lat_min_deg);
  spec.lat_max = deg2rad(a.lat_max_deg);

  if (a.verbose)
    std::cout << "stitch: rig=" << a.rig << " cameras=" << rig.cameras.size()
              << " out=" << a.out << " size=" << spec.width << "x" << spec.height
              << " lat=[" << a.lat_min_deg << "," << a.lat_max_deg << "] threads=" << a.threads
              << "\n";

  panokit::StitchResult res = panokit::stitch(rig, imgs, spec, a.threads);
  panokit::write_ppm(a.out, res.panorama);
  if (!a.coverage.empty()) panokit::write_pgm(a.coverage, res.coverage);
  return 0;
}

// ---- attend ----

struct AttendArgs {
  std::string image, out_hidden, out_mask, config;
  std::size_t patch = 14;
  std::uint64_t seed = 0;
  std::size_t dim = 256, heads = 4, window = 8, top_k = 512;
  std::size_t bottleneck = 196, selector_heads = 2;
  std::size_t threads = 1;
  bool oracle = false;
  bool verbose = false;
};

int run_attend(const AttendArgs& a) {
  require(!a.image.empty(), "--image");
  require(!a.out_hidden.empty(), "--out-hidden");
  require(!a.out_mask.empty(), "--out-mask");

  panokit::RgbImage img = panokit::read_ppm(a.image);
  if (a.patch == 0 || img.width % a.patch != 0 || img.height % a.patch != 0)
    throw panokit::ConfigError("--patch " + std::to_string(a.patch) +
                               " does not divide image " + std::to_string(img.width) + "x" +
                               std::to_string(img.height));
  const std::size_t grid_cols = img.width / a.patch;
  const std::size_t grid_rows = img.height / a.patch;
  const std::size_t n_patches = grid_rows * grid_cols;

  panokit::AttentionConfig cfg;
  cfg.d = a.dim;
  cfg.num_heads = a.heads;
  cfg.window_size = a.window;
  cfg.top_k = a.top_k;
  cfg.num_workers = a.threads;

  panokit::IndexerConfig idx;
  idx.num_selector_heads = a.selector_heads;
  idx.bottleneck = a.bottleneck;
  idx.d_gate = std::min(a.bottleneck / 2, cfg.d / 2);
  idx.d_index = std::min(a.bottleneck - idx.d_gate, cfg.d / 2);

  if (a.verbose)
    std::cout << "attend: image=" << a.image << " patch=" << a.patch << " grid=" << grid_rows
              << "x" << grid_cols << " d=" << cfg.d << " heads=" << cfg.num_heads
              << " window=" << cfg.window_size << " topk=" << cfg.top_k << " seed=" << a.seed
              << " d_gate=" << idx.d_gate << " d_index=" << idx.d_index
              << " threads=" << a.threads << "\n";

  panokit::Rng rng(a.seed);
  // fixed random patch embedding: flattened RGB in [0,1] times [3P^2 x d]
  const std::size_t patch_dim = 3 * a.patch * a.patch;
  const double bound = 1.0 / std::sqrt(static_cast<double>(patch_dim));
  panokit::Matrix embed = rng.uniform_matrix(patch_dim, cfg.d, -bound, bound);
  panokit::Matrix cls = rng.uniform_matrix(1, cfg.d, -1.0, 1.0);

  panokit::Matrix patches(n_patches, patch_dim);
  for (std::size_t pr = 0; pr < grid_rows; ++pr)
    for (std::size_t pc = 0; pc < grid_cols; ++pc) {
      const std::size_t p = pr * grid_cols + pc;
      std::size_t c = 0;
      for (std::size_t y = 0; y < a.patch; ++y)
        for (std::size_t x = 0; x < a.patch; ++x) {
          const panokit::Rgb px = img.at(pc * a.patch + x, pr * a.patch + y);
          patches(p, c++) = px.r / 255.0;
          patches(p, c++) = px.g / 255.0;
          patches(p, c++) = px.b / 255.0;
        }
    }
  panokit::Matrix embedded = panokit::matmul(patches, embed);

  panokit::Matrix hidden(n_patches + 1, cfg.d);
  for (std::size_t c = 0; c < cfg.d; ++c) hidden(0, c) = cls(0, c);
  for (std::size_t r = 0; r < n_patches; ++r)
    for (std::size_t c = 0; c < cfg.d; ++c) hidden(r + 1, c) = embedded(r, c);
  panokit::TokenSequence x{std::move(hidden), true};

  panokit::PhaBlockWeights w =
      panokit::PhaBlockWeights::random_init(cfg.d, idx, grid_rows, grid_cols, rng);
  panokit::PsaOptions opt;
  opt.force_gate_one = a.oracle;
  panokit::PhaResult res = panokit::pha_block(x, w, idx, cfg, opt);

  panokit::save_matrix(a.out_hidden, res.out.hidden);
  panokit::export_mask(panokit::AttentionMask::merge(res.local_mask, res.sparse_mask),
                       a.out_mask);
  std::cout << "tokens " << x.length() << " (cls + " << n_patches << " patches)\n";
  std::cout << "swa pairs " << res.local_mask.pair_count() << "\n";
  std::cout << "psa pairs " << res.sparse_mask.pair_count() << "\n";

  if (a.oracle) {
    // dense reference for the sparse branch: same projections, all keys
    panokit::BranchResult sparse =
        panokit::psa(x, w.sparse, w.indexer, idx, w.pe, w.gate, cfg, opt);
    panokit::Matrix dense = panokit::msa(x.hidden, w.sparse, cfg);
    double max_diff = 0;
    if (cfg.top_k >= x.length()) {
      for (std::size_t i = 0; i < dense.size(); ++i)
        max_diff = std::max(max_diff,
                            std::abs(dense.data()[i] - sparse.output.data()[i]));
    } else {
      max_diff = std::numeric_limits<double>::quiet_NaN();  // not comparable when K < L
    }
    std::printf("oracle max-abs diff vs dense %.3e\n", max_diff);
  }
  return 0;
}

// ---- annotate ----

struct AnnotateArgs {
  std::string frame, depth, depth_scale_json, out, subset = "N", config;
  std::size_t resolution = 256;
  bool verbose = false;
};

panokit::DepthMap load_depth(const std::string& path, const std::string& sidecar) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".pgm") {
    panokit::Gray16Image img = panokit::read_pgm16(path);
    double scale = 1.0;
    std::string sc = sidecar.empty() ? path + ".json" : sidecar;
    std::ifstream is(sc);
    if (!is) throw panokit::ConfigError("depth: cannot open sidecar " + sc);
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded() || !j.contains("meters_per_unit"))
      throw panokit::ConfigError("depth: sidecar " + sc + " needs 'meters_per_unit'");
    scale = j["meters_per_unit"].get<double>();
    panokit::DepthMap d(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      d.values[i] = img.pixels[i] == 0 ? std::numeric_limits<double>::quiet_NaN()
                                       : img.pixels[i] * scale;
    return d;
  }
  // raw float64 grid in the matrix text format; non-positive entries invalid
  panokit::Matrix m = panokit::load_matrix(path);
  panokit::DepthMap d(m.cols(), m.rows());
  for (std::size_t v = 0; v < m.rows(); ++v)
    for (std::size_t u = 0; u < m.cols(); ++u)
      d.at(u, v) = m(v, u) > 0 ? m(v, u) : std::numeric_limits<double>::quiet_NaN();
  return d;
}

int run_annotate(const AnnotateArgs& a) {
  require(!a.frame.empty(), "--frame");
  require(!a.out.empty(), "--out");
  panokit::Subset subset = panokit::subset_from_string(a.subset);

  std::ifstream is(a.frame);
  if (!is) throw panokit::ConfigError("frame: cannot open " + a.frame);
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded()) throw panokit::SchemaError("frame: invalid JSON in " + a.frame);
  panokit::SceneFrame frame = panokit::frame_from_json(j);

  panokit::DepthMap depth;
  const panokit::DepthMap* depth_ptr = nullptr;
  if (!a.depth.empty()) {
    depth = load_depth(a.depth, a.depth_scale_json);
    depth_ptr = &depth;
  }
  if (a.verbose)
    std::cout << "annotate: frame=" << a.frame << " subset=" << a.subset
              << " objects=" << frame.objects.size() << " resolution=" << a.resolution << "\n";

  panokit::FrameAnnotation ann =
      panokit::annotate_frame(frame, depth_ptr, subset, a.resolution);
  std::ofstream os(a.out);
  if (!os) throw panokit::FileError("cannot open for write: " + a.out);
  os << panokit::annotation_to_json(ann).dump(2) << "\n";
  return 0;
}

// ---- score ----

struct ScoreArgs {
  std::string in, out, table, config;
  bool verbose = false;
};

int run_score(const ScoreArgs& a) {
  require(!a.in.empty(), "--in");
  std::ifstream is(a.in);
  if (!is) throw panokit::ConfigError("cannot open " + a.in);
  std::vector<panokit::QARecord> records = panokit::read_qa_jsonl(is);
  panokit::ScoreReport rep = panokit::category_report(records);
  if (a.verbose) std::cout << "score: in=" << a.in << " records=" << records.size() << "\n";
  if (!a.out.empty()) {
    std::ofstream os(a.out);
    if (!os) throw panokit::FileError("cannot open for write: " + a.out);
    os << panokit::report_to_json(rep).dump(2) << "\n";
  }
  std::string table = panokit::report_to_table(rep);
  if (!a.table.empty()) {
    std::ofstream os(a.table);
    if (!os) throw panokit::FileError("cannot open for write: " + a.table);
    os << table;
  }
  std::cout << table;
  return 0;
}

// ---- filter ----

struct FilterArgs {
  std::string in, keywords, kept, removed, config;
  bool verbose = false;
};

int run_filter(const FilterArgs& a) {
  require(!a.in.empty(), "--in");
  require(!a.keywords.empty(), "--keywords");
  require(!a.kept.empty(), "--kept");
  std::ifstream is(a.in);
  if (!is) throw panokit::ConfigError("cannot open " + a.in);
  std::vector<panokit::QARecord> records = panokit::read_qa_jsonl(is);
  std::ifstream ks(a.keywords);
  if (!ks) throw panokit::ConfigError("cannot open " + a.keywords);
  panokit::FilterSpec spec = panokit::FilterSpec::parse(ks);

  panokit::FilterResult res = panokit::filter_records(records, spec);
  {
    std::ofstream os(a.kept);
    if (!os) throw panokit::FileError("cannot open for write: " + a.kept);
    panokit::write_qa_jsonl(os, res.kept);
  }
  if (!a.removed.empty()) {
    std::ofstream os(a.removed);
    if (!os) throw panokit::FileError("cannot open for write: " + a.removed);
    for (const auto& rm : res.removed) {
      nlohmann::json j = panokit::qa_record_to_json(rm.record);
      j["removed_reason"] = {{"keyword", rm.keyword}, {"field", rm.field}};
      os << j.dump() << "\n";
    }
  }
  std::cout << "kept " << res.kept.size() << "\n";
  std::cout << "removed " << res.removed.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"panorama-language modeling toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  StitchArgs sa;
  CLI::App* stitch = app.add_subcommand("stitch", "stitch a multi-camera rig into a panorama");
  stitch->add_option("--rig", sa.rig, "rig JSON file");
  stitch->add_option("--images", sa.images, "comma-separated PPM inputs, one per camera");
  stitch->add_option("--out", sa.out, "output panorama PPM");
  stitch->add_option("--coverage", sa.coverage, "output coverage PGM");
  stitch->add_option("--width", sa.width, "panorama width");
  stitch->add_option("--height", sa.height, "panorama height");
  stitch->add_option("--lat-min", sa.lat_min_deg, "latitude crop lower bound, degrees");
  stitch->add_option("--lat-max", sa.lat_max_deg, "latitude crop upper bound, degrees");
  stitch->add_option("--threads", sa.threads, "worker count");
  stitch->add_option("--config", sa.config, "JSON config merged under explicit flags");
  stitch->add_flag("--verbose", sa.verbose, "print the resolved configuration");

  AttendArgs aa;
  CLI::App* attend = app.add_subcommand("attend", "run one hybrid attention block on a panorama");
  attend->add_option("--image", aa.image, "input panorama PPM");
  attend->add_option("--patch", aa.patch, "patch size (must divide image dims)");
  attend->add_option("--seed", aa.seed, "seed for all randomness");
  attend->add_option("--dim", aa.dim, "model dimension");
  attend->add_option("--heads", aa.heads, "attention heads");
  attend->add_option("--window", aa.window, "sliding window size L_w");
  attend->add_option("--topk", aa.top_k, "Top-K keys per query");
  attend->add_option("--bottleneck", aa.bottleneck, "indexer bottleneck dimension");
  attend->add_option("--selector-heads", aa.selector_heads, "indexer selector heads");
  attend->add_option("--out-hidden", aa.out_hidden, "output hidden-state matrix file");
  attend->add_option("--out-mask", aa.out_mask, "output attention mask PGM");
  attend->add_option("--threads", aa.threads, "worker count");
  attend->add_option("--config", aa.config, "JSON config merged under explicit flags");
  attend->add_flag("--oracle", aa.oracle, "")->group("");  // debug: gate bypass + dense check
  attend->add_flag("--verbose", aa.verbose, "print the resolved configuration");

  AnnotateArgs na;
  CLI::App* annotate = app.add_subcommand("annotate", "derive quadruples and occlusions");
  annotate->add_option("--frame", na.frame, "frame JSON");
  annotate->add_option("--subset", na.subset, "N, O or D");
  annotate->add_option("--depth", na.depth, "depth map (.pgm 16-bit or matrix text)");
  annotate->add_option("--depth-scale-json", na.depth_scale_json,
                       "sidecar with meters_per_unit (default: <depth>.json)");
  annotate->add_option("--resolution", na.resolution, "raster resolution for areas");
  annotate->add_option("--out", na.out, "output annotation JSON");
  annotate->add_option("--config", na.config, "JSON config merged under explicit flags");
  annotate->add_flag("--verbose", na.verbose, "print the resolved configuration");

  ScoreArgs ca;
  CLI::App* score = app.add_subcommand("score", "aggregate judge scores into a report");
  score->add_option("--in", ca.in, "scored QA records, JSON Lines");
  score->add_option("--out", ca.out, "report JSON");
  score->add_option("--table", ca.table, "report text table");
  score->add_option("--config", ca.config, "JSON config merged under explicit flags");
  score->add_flag("--verbose", ca.verbose, "print the resolved configuration");

  FilterArgs fa;
  CLI::App* filter = app.add_subcommand("filter", "remove QA records matching banned keywords");
  filter->add_option("--in", fa.in, "QA records, JSON Lines");
  filter->add_option("--keywords", fa.keywords, "keyword file, one per line, # comments");
  filter->add_option("--kept", fa.kept, "output kept JSONL");
  filter->add_option("--removed", fa.removed, "output removed JSONL with reasons");
  filter->add_option("--config", fa.config, "JSON config merged under explicit flags");
  filter->add_flag("--verbose", fa.verbose, "print the resolved configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (stitch->parsed()) {
      merge_config(stitch, sa.config);
      return run_stitch(sa);
    }
    if (attend->parsed()) {
      merge_config(attend, aa.config);
      return run_attend(aa);
    }
    if (annotate->parsed()) {
      merge_config(annotate, na.config);
      return run_annotate(na);
    }
    if (score->parsed()) {
      merge_config(score, ca.config);
      return run_score(ca);
    }
    if (filter->parsed()) {
      merge_config(filter, fa.config);
      return run_filter(fa);
    }
  } catch (const panokit::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const panokit::SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const panokit::GeometryError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const panokit::FileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const panokit::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
