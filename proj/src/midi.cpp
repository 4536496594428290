// Standard MIDI File reading and writing. Only note and tempo data matter
// here; everything else is skipped.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "rhythmiq/error.hpp"
#include "rhythmiq/symbolic.hpp"

namespace rhythmiq {
namespace {

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  bool at_end() const { return pos_ >= data_.size(); }
  std::size_t pos() const { return pos_; }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = (std::uint32_t{data_[pos_]} << 24) | (std::uint32_t{data_[pos_ + 1]} << 16) |
                            (std::uint32_t{data_[pos_ + 2]} << 8) | std::uint32_t{data_[pos_ + 3]};
    pos_ += 4;
    return v;
  }
  std::uint32_t varlen() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    throw Error(ErrorKind::Format, "variable-length quantity longer than 4 bytes");
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::string tag() {
    auto s = take(4);
    return std::string(s.begin(), s.end());
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw Error(ErrorKind::Format, "truncated MIDI data");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

struct RawNote {
  std::uint64_t on_tick;
  std::uint64_t off_tick;
  int pitch;
  int velocity;
};

struct TempoChange {
  std::uint64_t tick;
  std::uint32_t usec_per_quarter;
};

void read_track(std::span<const std::uint8_t> chunk, std::vector<RawNote>& notes,
                std::vector<TempoChange>& tempi) {
  ByteReader r(chunk);
  std::uint64_t tick = 0;
  std::uint8_t running = 0;
  // Open note-ons per (channel, key), matched first-in first-out.
  std::map<std::pair<int, int>, std::deque<std::pair<std::uint64_t, int>>> open;

  while (!r.at_end()) {
    tick += r.varlen();
    std::uint8_t status = r.u8();
    std::uint8_t d1 = 0;
    if (status < 0x80) {
      if (running == 0) throw Error(ErrorKind::Format, "data byte without running status");
      d1 = status;
      status = running;
    } else if (status == 0xFF) {
      const std::uint8_t type = r.u8();
      const std::uint32_t len = r.varlen();
      const auto data = r.take(len);
      if (type == 0x51 && len == 3)
        tempi.push_back({tick, (std::uint32_t{data[0]} << 16) | (std::uint32_t{data[1]} << 8) | data[2]});
      if (type == 0x2F) break;
      continue;
    } else if (status == 0xF0 || status == 0xF7) {
      r.take(r.varlen());
      continue;
    } else if (status >= 0xF1) {
      throw Error(ErrorKind::Format, "unexpected system message in track");
    } else {
      running = status;
      d1 = r.u8();
    }
    const int type = status & 0xF0;
    const int ch = status & 0x0F;
    std::uint8_t d2 = 0;
    if (type != 0xC0 && type != 0xD0) d2 = r.u8();
    if (d1 > 127 || d2 > 127) throw Error(ErrorKind::Format, "MIDI data byte out of range");
    if (type == 0x90 && d2 > 0) {
      open[{ch, d1}].emplace_back(tick, d2);
    } else if (type == 0x80 || type == 0x90) {
      auto& q = open[{ch, d1}];
      if (!q.empty()) {
        notes.push_back({q.front().first, tick, d1, q.front().second});
        q.pop_front();
      }
    }
  }
  // Notes never released end with the track.
  for (auto& [key, q] : open)
    for (const auto& [on, vel] : q)
      if (tick > on) notes.push_back({on, tick, key.second, vel});
}

class TickClock {
 public:
  TickClock(std::uint16_t division, std::vector<TempoChange> tempi) {
    if (division & 0x8000) {
      const int fps_code = -static_cast<std::int8_t>(division >> 8);
      const double fps = fps_code == 29 ? 29.97 : fps_code;
      const int per_frame = division & 0xFF;
      if (fps <= 0 || per_frame == 0) throw Error(ErrorKind::Format, "invalid SMPTE division");
      smpte_seconds_per_tick_ = 1.0 / (fps * per_frame);
      return;
    }
    if (division == 0) throw Error(ErrorKind::Format, "zero ticks per quarter");
    tpq_ = division;
    std::stable_sort(tempi.begin(), tempi.end(),
                     [](const TempoChange& a, const TempoChange& b) { return a.tick < b.tick; });
    segments_.push_back({0, 0.0, 500000});
    for (const TempoChange& t : tempi) {
      Segment& last = segments_.back();
      if (t.tick == last.tick) {
        last.usec = t.usec_per_quarter;
        continue;
      }
      const double start = last.seconds + seconds_in(last, t.tick - last.tick);
      segments_.push_back({t.tick, start, t.usec_per_quarter});
    }
  }

  double seconds(std::uint64_t tick) const {
    if (smpte_seconds_per_tick_ > 0) return static_cast<double>(tick) * smpte_seconds_per_tick_;
    auto it = std::upper_bound(segments_.begin(), segments_.end(), tick,
                               [](std::uint64_t t, const Segment& s) { return t < s.tick; });
    const Segment& s = *std::prev(it);
    return s.seconds + seconds_in(s, tick - s.tick);
  }

 private:
  struct Segment {
    std::uint64_t tick;
    double seconds;
    std::uint32_t usec;
  };
  double seconds_in(const Segment& s, std::uint64_t ticks) const {
    return static_cast<double>(ticks) * s.usec * 1e-6 / tpq_;
  }

  double tpq_ = 480;
  double smpte_seconds_per_tick_ = 0.0;
  std::vector<Segment> segments_;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}
void put_varlen(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[5];
  int n = 0;
  buf[n++] = v & 0x7F;
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
  while (n) out.push_back(buf[--n]);
}

}  // namespace

Performance load_midi(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 14 || r.tag() != "MThd") throw Error(ErrorKind::Format, "missing MThd header");
  const std::uint32_t header_len = r.u32();
  if (header_len < 6) throw Error(ErrorKind::Format, "short MThd chunk");
  const std::uint16_t format = r.u16();
  const std::uint16_t ntracks = r.u16();
  const std::uint16_t division = r.u16();
  r.take(header_len - 6);
  if (format > 1) throw Error(ErrorKind::Format, "only SMF format 0 and 1 are supported");

  std::vector<RawNote> raw;
  std::vector<TempoChange> tempi;
  int tracks_seen = 0;
  while (!r.at_end() && tracks_seen < ntracks) {
    const std::string tag = r.tag();
    const std::uint32_t len = r.u32();
    const auto chunk = r.take(len);
    if (tag != "MTrk") continue;
    read_track(chunk, raw, tempi);
    ++tracks_seen;
  }
  if (tracks_seen < ntracks) throw Error(ErrorKind::Format, "fewer track chunks than declared");
  if (raw.empty()) throw Error(ErrorKind::EmptyInput, "MIDI file contains no notes");

  const TickClock clock(division, std::move(tempi));
  std::vector<NoteEvent> notes;
  notes.reserve(raw.size());
  for (const RawNote& n : raw) {
    if (n.off_tick <= n.on_tick) continue;
    const double on = clock.seconds(n.on_tick);
    notes.push_back({on, clock.seconds(n.off_tick) - on, n.pitch, n.velocity});
  }
  if (notes.empty()) throw Error(ErrorKind::EmptyInput, "MIDI file contains no sounding notes");
  return Performance(std::move(notes));
}

std::vector<std::uint8_t> save_midi(const Performance& perf, double bpm) {
  if (perf.empty()) throw Error(ErrorKind::EmptyInput, "cannot write an empty performance");
  if (!(bpm > 0.0) || !std::isfinite(bpm)) throw Error(ErrorKind::Validation, "bpm must be > 0");

  const double ticks_per_second = bpm / 60.0 * kWriteTicksPerQuarter;
  struct Ev {
    std::uint64_t tick;
    bool on;
    int pitch;
    int velocity;
  };
  std::vector<Ev> events;
  for (const NoteEvent& n : perf.notes()) {
    const auto on = static_cast<std::uint64_t>(std::llround(n.onset * ticks_per_second));
    auto off = static_cast<std::uint64_t>(std::llround(n.offset() * ticks_per_second));
    if (off <= on) off = on + 1;
    events.push_back({on, true, n.pitch, n.velocity});
    events.push_back({off, false, n.pitch, 0});
  }
  std::stable_sort(events.begin(), events.end(), [](const Ev& a, const Ev& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    return !a.on && b.on;  // releases first at equal ticks
  });

  std::vector<std::uint8_t> track;
  const auto usec = static_cast<std::uint32_t>(std::llround(60e6 / bpm));
  put_varlen(track, 0);
  track.insert(track.end(), {0xFF, 0x51, 0x03});
  track.push_back(static_cast<std::uint8_t>(usec >> 16));
  track.push_back(static_cast<std::uint8_t>(usec >> 8));
  track.push_back(static_cast<std::uint8_t>(usec));
  std::uint64_t last = 0;
  for (const Ev& e : events) {
    put_varlen(track, static_cast<std::uint32_t>(e.tick - last));
    last = e.tick;
    track.push_back(e.on ? 0x90 : 0x80);
    track.push_back(static_cast<std::uint8_t>(e.pitch));
    track.push_back(static_cast<std::uint8_t>(e.on ? e.velocity : 64));
  }
  put_varlen(track, 0);
  track.insert(track.end(), {0xFF, 0x2F, 0x00});

  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd'};
  put_u32(out, 6);
  put_u16(out, 0);
  put_u16(out, 1);
  put_u16(out, kWriteTicksPerQuarter);
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  put_u32(out, static_cast<std::uint32_t>(track.size()));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

}  // namespace rhythmiq
