#include "rhythmiq/symbolic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "rhythmiq/error.hpp"

namespace rhythmiq {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Reference: return "reference";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::NoTempo: return "no-tempo";
    case ErrorKind::Capacity: return "capacity";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Decomposition: return "decomposition";
    case ErrorKind::NotFound: return "not-found";
    case ErrorKind::Unsupported: return "unsupported-content";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::UndefinedReference: return "undefined-reference";
    case ErrorKind::Config: return "config";
    case ErrorKind::Pairing: return "pairing";
  }
  return "unknown";
}

Performance::Performance(std::vector<NoteEvent> notes, std::string source_label)
    : notes_(std::move(notes)), source_label_(std::move(source_label)) {
  for (const NoteEvent& n : notes_) {
    if (!(n.onset >= 0.0) || !std::isfinite(n.onset))
      throw Error(ErrorKind::Validation, "note onset must be finite and >= 0");
    if (!(n.duration > 0.0) || !std::isfinite(n.duration))
      throw Error(ErrorKind::Validation, "note duration must be > 0");
    if (n.pitch < 0 || n.pitch > 127)
      throw Error(ErrorKind::Validation, "pitch out of MIDI range: " + std::to_string(n.pitch));
    if (n.velocity < 1 || n.velocity > 127)
      throw Error(ErrorKind::Validation, "velocity out of range: " + std::to_string(n.velocity));
  }
  std::stable_sort(notes_.begin(), notes_.end(), [](const NoteEvent& a, const NoteEvent& b) {
    if (a.onset != b.onset) return a.onset < b.onset;
    return a.pitch < b.pitch;
  });
}

bool Performance::is_monophonic() const {
  for (std::size_t i = 1; i < notes_.size(); ++i)
    if (notes_[i - 1].offset() > notes_[i].onset) return false;
  return true;
}

TimeSignature::TimeSignature(int num, int den) : numerator(num), denominator(den) {
  if (num < 1) throw Error(ErrorKind::Validation, "time signature numerator must be positive");
  if (den < 1 || den > 32 || (den & (den - 1)) != 0)
    throw Error(ErrorKind::Validation,
                "time signature denominator must be a power of two <= 32");
}

std::string TimeSignature::str() const {
  return std::to_string(numerator) + "/" + std::to_string(denominator);
}

BeatGrid::BeatGrid(std::vector<double> beats, int beats_per_bar, int phase,
                   TimeSignature time_signature)
    : beats_(std::move(beats)),
      beats_per_bar_(beats_per_bar),
      phase_(phase),
      time_signature_(time_signature) {
  if (beats_.size() < 2) throw Error(ErrorKind::Validation, "beat grid needs at least 2 beats");
  for (std::size_t i = 1; i < beats_.size(); ++i)
    if (!(beats_[i] > beats_[i - 1]))
      throw Error(ErrorKind::Validation, "beat times must be strictly increasing");
  if (beats_per_bar_ < 1) throw Error(ErrorKind::Validation, "beats_per_bar must be positive");
  if (phase_ < 0 || phase_ >= beats_per_bar_)
    throw Error(ErrorKind::Validation, "phase must lie in [0, beats_per_bar)");
}

BeatGrid::BeatGrid(std::vector<double> beats, int beats_per_bar, int phase)
    : BeatGrid(std::move(beats), beats_per_bar, phase, TimeSignature(beats_per_bar, 4)) {}

std::vector<double> BeatGrid::downbeats() const {
  std::vector<double> out;
  for (std::size_t i = static_cast<std::size_t>(phase_); i < beats_.size();
       i += static_cast<std::size_t>(beats_per_bar_))
    out.push_back(beats_[i]);
  return out;
}

BeatGrid BeatGrid::with_phase(int phase) const {
  return BeatGrid(beats_, beats_per_bar_, phase, time_signature_);
}

double BeatGrid::beat_position(double t) const {
  const std::size_t n = beats_.size();
  if (t <= beats_.front())
    return (t - beats_[0]) / (beats_[1] - beats_[0]);
  if (t >= beats_.back())
    return static_cast<double>(n - 1) + (t - beats_[n - 1]) / (beats_[n - 1] - beats_[n - 2]);
  const auto it = std::upper_bound(beats_.begin(), beats_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - beats_.begin()) - 1;
  return static_cast<double>(i) + (t - beats_[i]) / (beats_[i + 1] - beats_[i]);
}

double BeatGrid::time_at(double b) const {
  const std::size_t n = beats_.size();
  if (b <= 0.0) return beats_[0] + b * (beats_[1] - beats_[0]);
  if (b >= static_cast<double>(n - 1))
    return beats_[n - 1] + (b - static_cast<double>(n - 1)) * (beats_[n - 1] - beats_[n - 2]);
  const auto i = static_cast<std::size_t>(std::floor(b));
  return beats_[i] + (b - static_cast<double>(i)) * (beats_[i + 1] - beats_[i]);
}

Performance enforce_monophony(const Performance& perf) {
  // Among notes sharing an onset only the longest survives (highest pitch on
  // equal length); the others would be truncated to nothing anyway.
  std::vector<NoteEvent> in;
  for (const NoteEvent& n : perf.notes()) {
    if (!in.empty() && in.back().onset == n.onset) {
      if (n.duration >= in.back().duration) in.back() = n;
      continue;
    }
    in.push_back(n);
  }
  std::vector<NoteEvent> out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    NoteEvent n = in[i];
    if (i + 1 < in.size()) {
      const double next_onset = in[i + 1].onset;
      if (n.offset() > next_onset) n.duration = next_onset - n.onset;
      while (n.duration > 0.0 && n.offset() > next_onset) n.duration = std::nextafter(n.duration, 0.0);
    }
    if (n.duration > 0.0) out.push_back(n);
  }
  return Performance(std::move(out), perf.source_label());
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  // from_chars for double is available in libstdc++ 11.
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

BeatGrid load_beats(std::string_view text) {
  std::vector<double> times;
  std::vector<int> positions;
  std::size_t line_no = 0;
  bool seen_data = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto sep = line.find_first_of(",;\t ");
    const auto second =
        sep == std::string_view::npos ? sep : line.find_first_not_of(",;\t ", sep);
    double t = 0.0, pos = 0.0;
    const bool ok = second != std::string_view::npos && parse_double(line.substr(0, sep), t) &&
                    parse_double(line.substr(second), pos);
    if (!ok) {
      if (!seen_data && times.empty()) {  // optional header
        seen_data = true;
        continue;
      }
      throw Error(ErrorKind::Format, "malformed beat record at line " + std::to_string(line_no));
    }
    seen_data = true;
    if (pos < 1.0 || pos != std::floor(pos))
      throw Error(ErrorKind::Validation,
                  "beat position must be a positive integer at line " + std::to_string(line_no));
    if (!times.empty() && !(t > times.back()))
      throw Error(ErrorKind::Validation,
                  "beat times must be strictly increasing (line " + std::to_string(line_no) + ")");
    times.push_back(t);
    positions.push_back(static_cast<int>(pos));
  }
  if (times.size() < 2) throw Error(ErrorKind::Validation, "beat file needs at least 2 beats");
  const auto first_down = std::find(positions.begin(), positions.end(), 1);
  if (first_down == positions.end())
    throw Error(ErrorKind::Validation, "beat file contains no downbeat");
  const int beats_per_bar = *std::max_element(positions.begin(), positions.end());
  const int phase = static_cast<int>(first_down - positions.begin());
  if (phase >= beats_per_bar)
    throw Error(ErrorKind::Validation, "first downbeat lies more than one bar into the file");
  return BeatGrid(std::move(times), beats_per_bar, phase);
}

std::string save_beats(const BeatGrid& grid) {
  std::ostringstream os;
  os.precision(17);
  os << "# time_sec,beat_in_bar\n";
  const int bpb = grid.beats_per_bar();
  for (std::size_t i = 0; i < grid.beats().size(); ++i) {
    const int rel = static_cast<int>(i) - grid.phase();
    const int pos = ((rel % bpb) + bpb) % bpb + 1;
    os << grid.beats()[i] << ',' << pos << '\n';
  }
  return os.str();
}

}  // namespace rhythmiq
