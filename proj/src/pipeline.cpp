#include "rhythmiq/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "rhythmiq/evaluation.hpp"
#include "rhythmiq/musicxml.hpp"
#include "rhythmiq/quantizer.hpp"
#include "rhythmiq/tempo.hpp"
#include "rhythmiq/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace rhythmiq {

void PipelineConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw Error(ErrorKind::Config, "alpha must be a finite number >= 0");
  if (!(rest_threshold > 0.0 && rest_threshold <= 1.0))
    throw Error(ErrorKind::Config, "rest threshold must lie in (0, 1]");
  if (resolution < 1) throw Error(ErrorKind::Config, "resolution must be >= 1");
  if (!(onset_tol > 0.0) || !(downbeat_tol > 0.0))
    throw Error(ErrorKind::Config, "tolerances must be positive");
  if (jobs < 1) throw Error(ErrorKind::Config, "jobs must be >= 1");
  if (key_fifths < -7 || key_fifths > 7) throw Error(ErrorKind::Config, "key must lie in -7..7");
  if (!(smoothing >= 0.0)) throw Error(ErrorKind::Config, "smoothing must be >= 0");
  if (max_depth < 1) throw Error(ErrorKind::Config, "max depth must be >= 1");
  if (phase && *phase < 0) throw Error(ErrorKind::Config, "phase must be >= 0");
}

std::vector<std::pair<double, double>> parse_segments(const std::string& text) {
  std::vector<std::pair<double, double>> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const std::size_t dash = item.find('-', 1);
    try {
      if (dash == std::string::npos) throw std::invalid_argument(item);
      std::size_t used_a = 0, used_b = 0;
      const std::string a = item.substr(0, dash), b = item.substr(dash + 1);
      const double start = std::stod(a, &used_a);
      const double end = std::stod(b, &used_b);
      if (used_a != a.size() || used_b != b.size() || !(end > start))
        throw std::invalid_argument(item);
      out.emplace_back(start, end);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Config, "bad segment '" + item + "', expected start-end in seconds");
    }
  }
  return out;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InsufficientData:
    case ErrorKind::EmptyInput:
    case ErrorKind::NoTempo:
      return 2;
    case ErrorKind::Config:
    case ErrorKind::Reference:
      return 3;
    case ErrorKind::Pairing:
      return 4;
    default:
      return 1;
  }
}

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in || fs::is_directory(path)) throw Error(ErrorKind::Io, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

void write_warnings(const fs::path& path, const std::vector<std::string>& warnings) {
  if (warnings.empty()) {
    std::error_code ec;
    fs::remove(path, ec);
    return;
  }
  std::string text;
  for (const std::string& w : warnings) text += w + "\n";
  write_file(path, text);
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first failure by
// index is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

json number(double v, int decimals = 6) {
  const double scale = std::pow(10.0, decimals);
  const double r = std::round(v * scale) / scale;
  if (r == std::round(r) && std::abs(r) < 1e15) return static_cast<std::int64_t>(std::llround(r));
  return r;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

bool in_segments(double t, const std::vector<std::pair<double, double>>& segments) {
  if (segments.empty()) return true;
  for (const auto& [a, b] : segments)
    if (t >= a && t <= b) return true;
  return false;
}

std::vector<double> filter_times(const std::vector<double>& times,
                                 const std::vector<std::pair<double, double>>& segments) {
  std::vector<double> out;
  for (double t : times)
    if (in_segments(t, segments)) out.push_back(t);
  return out;
}

Performance filter_notes(const Performance& perf,
                         const std::vector<std::pair<double, double>>& segments) {
  std::vector<NoteEvent> kept;
  for (const NoteEvent& n : perf.notes())
    if (in_segments(n.onset, segments)) kept.push_back(n);
  return Performance(std::move(kept), perf.source_label());
}

}  // namespace

RhythmGrammar load_grammar(const PipelineConfig& config, std::vector<std::string>* warnings) {
  if (!config.grammar_path) return default_grammar();
  try {
    return parse_grammar(read_text(*config.grammar_path), warnings);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, "grammar " + config.grammar_path->string() + ": " + e.what());
  }
}

std::string cmd_tempo(const fs::path& midi) {
  const Performance perf = load_midi(read_bytes(midi));
  const TempoEstimate est = estimate_tempo_ioi(perf);
  const TempoBounds bounds = tempo_bounds(est);
  json j;
  j["bpm"] = number(est.bpm, 2);
  j["min_bpm"] = number(bounds.min_bpm, 2);
  j["max_bpm"] = number(bounds.max_bpm, 2);
  j["cluster_support"] = est.cluster_support;
  j["confidence"] = number(est.confidence, 4);
  return j.dump() + "\n";
}

std::string cmd_quantize(const fs::path& midi, const std::optional<fs::path>& beats,
                         const PipelineConfig& config) {
  config.validate();
  const RhythmGrammar grammar = load_grammar(config);
  const Performance perf = enforce_monophony(load_midi(read_bytes(midi)));

  std::optional<BeatGrid> grid;
  if (beats) {
    grid = load_beats(read_text(*beats));
  } else {
    const TempoEstimate est = estimate_tempo_ioi(perf);
    const double first = perf.notes().front().onset;
    double last = first;
    for (const NoteEvent& n : perf.notes()) last = std::max(last, n.offset());
    grid = grid_from_tempo(est.bpm, first, last - first);
  }
  if (config.phase) {
    if (*config.phase >= grid->beats_per_bar())
      throw Error(ErrorKind::Config, "phase must be below " + std::to_string(grid->beats_per_bar()));
    grid = grid->with_phase(*config.phase);
  }
  const std::vector<BeatGrid> grids =
      config.rotations ? enumerate_rotations(*grid) : std::vector<BeatGrid>{*grid};

  QuantConfig qc;
  qc.alpha = config.alpha;
  qc.rest_threshold = config.rest_threshold;
  QuantizeOptions options;
  options.fallback_on_failure = true;
  options.fallback_resolution = config.resolution;

  struct Outcome {
    std::string xml;
    std::vector<std::string> warnings;
    QuantizeStats stats;
    std::size_t measures = 0;
  };
  std::vector<Outcome> outcomes(grids.size());
  parallel_for(grids.size(), config.jobs, [&](std::size_t i) {
    Outcome& o = outcomes[i];
    const ScoreModel score =
        quantize_performance(perf, grids[i], grammar, qc, options, &o.warnings, &o.stats);
    o.xml = emit_musicxml(score, config.key_fifths);
    o.measures = score.measures.size();
  });

  const std::string stem = midi.stem().string();
  std::vector<std::string> warnings;
  json outputs = json::array();
  for (std::size_t i = 0; i < grids.size(); ++i) {
    const int phase = grids[i].phase();
    const std::string name =
        config.rotations ? stem + ".rot" + std::to_string(phase) + ".musicxml" : stem + ".musicxml";
    write_file(config.out_dir / name, outcomes[i].xml);
    for (const std::string& w : outcomes[i].warnings)
      warnings.push_back(config.rotations ? "rot" + std::to_string(phase) + " " + w : w);
    json o;
    o["file"] = name;
    o["phase"] = phase;
    o["measures"] = outcomes[i].measures;
    o["fallback_measures"] = outcomes[i].stats.fallback_measures;
    o["cost"] = number(outcomes[i].stats.cost, 4);
    outputs.push_back(o);
  }
  if (config.rotations) {
    std::stable_sort(outputs.begin(), outputs.end(), [](const json& a, const json& b) {
      const auto fa = a["fallback_measures"].get<std::size_t>();
      const auto fb = b["fallback_measures"].get<std::size_t>();
      if (fa != fb) return fa < fb;
      return a["cost"].get<double>() < b["cost"].get<double>();
    });
    for (std::size_t r = 0; r < outputs.size(); ++r) outputs[r]["rank"] = r + 1;
  }
  const fs::path sidecar = config.out_dir / (stem + ".warnings.txt");
  write_warnings(sidecar, warnings);

  json j;
  j["input"] = midi.filename().string();
  j["tempo_bpm"] = number(60.0 / ((grid->beats().back() - grid->beats().front()) /
                                  static_cast<double>(grid->beats().size() - 1)),
                          2);
  j["outputs"] = outputs;
  j["warnings"] = warnings.size();
  if (!warnings.empty()) j["warnings_file"] = sidecar.filename().string();
  return dump(j);
}

namespace {

std::vector<fs::path> list_files(const fs::path& dir, const std::set<std::string>& extensions) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (extensions.count(ext)) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

const std::set<std::string> kScoreExtensions = {".musicxml", ".xml"};

}  // namespace

std::string cmd_train_grammar(const fs::path& corpus_dir, const PipelineConfig& config) {
  config.validate();
  const std::vector<fs::path> files = list_files(corpus_dir, kScoreExtensions);
  if (files.empty())
    throw Error(ErrorKind::InsufficientData, "no MusicXML files in " + corpus_dir.string());

  std::vector<std::optional<ScoreModel>> parsed(files.size());
  std::vector<std::vector<std::string>> file_warnings(files.size());
  parallel_for(files.size(), config.jobs, [&](std::size_t i) {
    try {
      parsed[i] = parse_musicxml(read_text(files[i]), &file_warnings[i]);
    } catch (const Error& e) {
      file_warnings[i].push_back(std::string("skipped: ") + e.what());
    }
  });
  std::vector<std::string> warnings;
  std::vector<ScoreModel> corpus;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < files.size(); ++i) {
    for (const std::string& w : file_warnings[i])
      warnings.push_back(files[i].filename().string() + ": " + w);
    if (parsed[i]) {
      corpus.push_back(std::move(*parsed[i]));
      names.push_back(files[i].filename().string());
    }
  }
  if (corpus.empty())
    throw Error(ErrorKind::InsufficientData, "no parseable scores in " + corpus_dir.string());

  TrainOptions options;
  options.smoothing = config.smoothing;
  options.max_depth = config.max_depth;
  options.skip_undecomposable = true;
  std::vector<std::string> train_warnings;
  const RhythmGrammar grammar = train_grammar(corpus, options, &train_warnings);
  for (std::string w : train_warnings) {
    // Name the file instead of the corpus index.
    if (w.rfind("score ", 0) == 0) {
      const std::size_t end = w.find(' ', 6);
      const std::size_t index = std::stoul(w.substr(6, end - 6));
      if (index >= 1 && index <= names.size()) w = names[index - 1] + w.substr(end);
    }
    warnings.push_back(w);
  }

  const fs::path out = config.out_file.value_or(config.out_dir / "trained.grammar");
  write_file(out, serialize_grammar(grammar));
  write_warnings(out.parent_path() / (out.stem().string() + ".warnings.txt"), warnings);

  std::size_t rules = 0;
  for (const std::string& head : grammar.heads()) rules += grammar.rules_for(head).size();
  std::ostringstream text;
  text << "wrote " << out.string() << "\n";
  text << "scores: " << corpus.size() << "\n";
  text << "rules: " << rules << "\n";
  text << "head entropies (nats):\n";
  char line[128];
  for (const auto& [head, h] : head_entropies(grammar)) {
    std::snprintf(line, sizeof line, "  %-12s %.4f\n", head.c_str(), h);
    text << line;
  }
  if (!warnings.empty()) text << "warnings: " << warnings.size() << "\n";
  return text.str();
}

namespace {

std::set<std::string> extensions_for(EvalKind kind) {
  switch (kind) {
    case EvalKind::Notes: return {".mid", ".midi"};
    case EvalKind::Downbeats: return {".csv", ".txt", ".beats"};
    case EvalKind::Score: return kScoreExtensions;
    case EvalKind::Sdr: return {".wav"};
  }
  return {};
}

void add_counts(MetricEntry& e, const MatchScore& s) {
  e.counts["matched"] = static_cast<std::int64_t>(s.matched);
  e.counts["reference"] = static_cast<std::int64_t>(s.reference);
  e.counts["estimate"] = static_cast<std::int64_t>(s.estimate);
}

EvalReport evaluate_pair(EvalKind kind, const fs::path& ref, const fs::path& est,
                         const PipelineConfig& config) {
  EvalReport report;
  report.piece = ref.stem().string();
  switch (kind) {
    case EvalKind::Notes: {
      const Performance r = filter_notes(load_midi(read_bytes(ref)), config.segments);
      const Performance e = filter_notes(load_midi(read_bytes(est)), config.segments);
      const MatchScore s = note_metrics(r, e, config.onset_tol);
      for (const auto& [name, value] : {std::pair{"note_precision", s.precision},
                                        std::pair{"note_recall", s.recall},
                                        std::pair{"note_f", s.f}}) {
        MetricEntry m{name, value, {{"onset_tol", config.onset_tol}}, {}};
        add_counts(m, s);
        report.entries.push_back(std::move(m));
      }
      break;
    }
    case EvalKind::Downbeats: {
      const std::vector<double> r = filter_times(load_beats(read_text(ref)).downbeats(), config.segments);
      const BeatGrid grid = load_beats(read_text(est));
      const MatchScore plain =
          downbeat_fmeasure(r, filter_times(grid.downbeats(), config.segments), config.downbeat_tol);
      MetricEntry m{"downbeat_f", plain.f, {{"tol", config.downbeat_tol},
                                             {"phase", std::int64_t{grid.phase()}}}, {}};
      add_counts(m, plain);
      report.entries.push_back(std::move(m));
      if (config.rotations) {
        MatchScore best;
        int best_phase = 0;
        bool first = true;
        for (const BeatGrid& g : enumerate_rotations(grid)) {
          const MatchScore s =
              downbeat_fmeasure(r, filter_times(g.downbeats(), config.segments), config.downbeat_tol);
          if (first || s.f > best.f + 1e-12) {
            best = s;
            best_phase = g.phase();
            first = false;
          }
        }
        MetricEntry b{"downbeat_f_rotations", best.f, {{"tol", config.downbeat_tol},
                                                       {"phase", std::int64_t{best_phase}}}, {}};
        add_counts(b, best);
        report.entries.push_back(std::move(b));
      }
      break;
    }
    case EvalKind::Score: {
      if (!config.segments.empty())
        throw Error(ErrorKind::Config, "segments do not apply to score evaluation");
      const ScoreModel r = parse_musicxml(read_text(ref));
      const ScoreModel e = parse_musicxml(read_text(est));
      const EditRates rates = score_edit_metrics(r, e);
      const std::map<std::string, ParamValue> params = {
          {"direction", std::string("estimate-to-reference")},
          {"normalizer", std::string("reference notes")}};
      const std::pair<const char*, std::pair<double, std::size_t>> rows[] = {
          {"note_insert", {rates.note_insert, rates.note_inserts}},
          {"note_delete", {rates.note_delete, rates.note_deletes}},
          {"rest_insert", {rates.rest_insert, rates.rest_inserts}},
          {"rest_delete", {rates.rest_delete, rates.rest_deletes}},
          {"timesig", {rates.timesig, rates.timesig_errors}}};
      for (const auto& [name, v] : rows) {
        MetricEntry m{name, v.first, params, {}};
        m.counts["edits"] = static_cast<std::int64_t>(v.second);
        m.counts["reference_notes"] = static_cast<std::int64_t>(rates.reference_notes);
        report.entries.push_back(std::move(m));
      }
      break;
    }
    case EvalKind::Sdr: {
      const Audio r = read_wav(read_bytes(ref));
      const Audio e = read_wav(read_bytes(est));
      if (r.sample_rate != e.sample_rate)
        throw Error(ErrorKind::Shape, "sample rates differ: " + std::to_string(r.sample_rate) +
                                          " vs " + std::to_string(e.sample_rate));
      std::vector<double> rs, es;
      if (config.segments.empty()) {
        rs = r.samples;
        es = e.samples;
      } else {
        if (r.samples.size() != e.samples.size())
          throw Error(ErrorKind::Shape, "signal lengths differ");
        for (std::size_t i = 0; i < r.samples.size(); ++i)
          if (in_segments(static_cast<double>(i) / r.sample_rate, config.segments)) {
            rs.push_back(r.samples[i]);
            es.push_back(e.samples[i]);
          }
      }
      MetricEntry m{"sdr", sdr(rs, es), {{"cap_db", kSdrCap},
                                         {"sample_rate", std::int64_t{r.sample_rate}}}, {}};
      m.counts["samples"] = static_cast<std::int64_t>(rs.size());
      report.entries.push_back(std::move(m));
      break;
    }
  }
  return report;
}

}  // namespace

std::string cmd_eval(EvalKind kind, const fs::path& ref, const fs::path& est,
                     const PipelineConfig& config) {
  config.validate();
  const bool ref_dir = fs::is_directory(ref), est_dir = fs::is_directory(est);
  if (ref_dir != est_dir)
    throw Error(ErrorKind::Config, "reference and estimate must both be files or both directories");
  if (!ref_dir) return report_json(evaluate_pair(kind, ref, est, config));

  const auto exts = extensions_for(kind);
  std::map<std::string, fs::path> refs, ests;
  for (const fs::path& p : list_files(ref, exts)) refs[p.stem().string()] = p;
  for (const fs::path& p : list_files(est, exts)) ests[p.stem().string()] = p;
  std::vector<std::string> unmatched;
  for (const auto& [stem, p] : refs)
    if (!ests.count(stem)) unmatched.push_back("reference only: " + p.filename().string());
  for (const auto& [stem, p] : ests)
    if (!refs.count(stem)) unmatched.push_back("estimate only: " + p.filename().string());
  if (!unmatched.empty()) {
    std::string msg = "unmatched files:";
    for (const std::string& u : unmatched) msg += "\n  " + u;
    throw Error(ErrorKind::Pairing, msg);
  }
  if (refs.empty()) throw Error(ErrorKind::InsufficientData, "no files to evaluate");

  std::vector<std::pair<fs::path, fs::path>> pairs;
  for (const auto& [stem, p] : refs) pairs.emplace_back(p, ests.at(stem));
  std::vector<EvalReport> reports(pairs.size());
  parallel_for(pairs.size(), config.jobs, [&](std::size_t i) {
    try {
      reports[i] = evaluate_pair(kind, pairs[i].first, pairs[i].second, config);
    } catch (const Error& e) {
      throw Error(e.kind(), pairs[i].first.filename().string() + ": " + e.what());
    }
  });
  return batch_report_json(std::move(reports));
}

std::string cmd_rotations(const fs::path& beats, const std::optional<fs::path>& reference,
                          const PipelineConfig& config) {
  config.validate();
  const BeatGrid grid = load_beats(read_text(beats));
  std::optional<std::vector<double>> ref;
  if (reference) ref = load_beats(read_text(*reference)).downbeats();
  json rows = json::array();
  for (const BeatGrid& g : enumerate_rotations(grid)) {
    json row;
    row["phase"] = g.phase();
    json downbeats = json::array();
    for (double t : g.downbeats()) downbeats.push_back(number(t));
    if (ref) {
      const MatchScore s = downbeat_fmeasure(*ref, g.downbeats(), config.downbeat_tol);
      row["f"] = number(s.f, 4);
      row["matched"] = s.matched;
    }
    row["downbeats"] = downbeats;
    rows.push_back(row);
  }
  if (ref) {
    std::stable_sort(rows.begin(), rows.end(), [](const json& a, const json& b) {
      return a["f"].get<double>() > b["f"].get<double>();
    });
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r]["rank"] = r + 1;
  }
  json j;
  j["beats_per_bar"] = grid.beats_per_bar();
  j["annotated_phase"] = grid.phase();
  if (ref) j["tol"] = config.downbeat_tol;
  j["rotations"] = rows;
  return dump(j);
}

}  // namespace rhythmiq
