#include "edgespeech/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "edgespeech/dsp.hpp"
#include "edgespeech/error.hpp"

namespace edgespeech::metrics {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Symmetric Hann of length n without its zero end points.
std::vector<double> inner_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i + 1) / static_cast<double>(n + 1));
  }
  return w;
}

// Frame starts 0, hop, ... strictly below len - frame_len.
std::size_t frame_count(std::size_t len, std::size_t frame_len, std::size_t hop) {
  return len > frame_len ? (len - frame_len - 1) / hop + 1 : 0;
}

double norm(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return std::sqrt(s);
}

// Drops frames of x more than dyn_range dB below its loudest frame (and the
// matching frames of y), then overlap-adds the windowed frames that remain.
void remove_silent_frames(std::vector<double>& x, std::vector<double>& y, const StoiConfig& cfg) {
  const std::size_t n = cfg.frame_len;
  const std::size_t hop = n / 2;
  const auto w = inner_hann(n);
  const std::size_t frames = frame_count(x.size(), n, hop);
  std::vector<double> db(frames);
  std::vector<double> buf(n);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = w[i] * x[f * hop + i];
    db[f] = 20.0 * std::log10(norm(buf.data(), n) + kEps);
  }
  const double peak = frames ? *std::max_element(db.begin(), db.end()) : 0.0;
  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < frames; ++f) {
    if (peak - cfg.dynamic_range_db - db[f] < 0.0) keep.push_back(f);
  }
  const std::size_t out_len = keep.empty() ? 0 : (keep.size() - 1) * hop + n;
  std::vector<double> xs(out_len, 0.0);
  std::vector<double> ys(out_len, 0.0);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const std::size_t src = keep[k] * hop;
    for (std::size_t i = 0; i < n; ++i) {
      xs[k * hop + i] += w[i] * x[src + i];
      ys[k * hop + i] += w[i] * y[src + i];
    }
  }
  x = std::move(xs);
  y = std::move(ys);
}

// Third-octave band envelopes, [bands x frames] row-major.
std::vector<double> band_envelopes(const std::vector<double>& x, const std::vector<std::vector<double>>& obm,
                                   const StoiConfig& cfg, std::size_t& frames) {
  const std::size_t n = cfg.frame_len;
  const std::size_t hop = n / 2;
  const auto w = inner_hann(n);
  frames = frame_count(x.size(), n, hop);
  const std::size_t bands = obm.size();
  std::vector<double> out(bands * frames, 0.0);
  std::vector<double> buf(n);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = w[i] * x[f * hop + i];
    const auto spec = dsp::rfft(buf, cfg.fft_len);
    for (std::size_t b = 0; b < bands; ++b) {
      double e = 0.0;
      for (std::size_t k = 0; k < spec.size(); ++k) {
        if (obm[b][k] != 0.0) e += obm[b][k] * std::norm(spec[k]);
      }
      out[b * frames + f] = std::sqrt(e);
    }
  }
  return out;
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) fail(ErrorCode::LengthMismatch, std::to_string(a) + " vs " + std::to_string(b) + " samples");
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::CorruptHeader, "bad " + what + " value '" + s + "'");
  }
}

}  // namespace

std::vector<std::vector<double>> third_octave_bands(const StoiConfig& cfg) {
  const std::size_t bins = cfg.fft_len / 2 + 1;
  std::vector<double> f(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    f[k] = static_cast<double>(cfg.sample_rate_hz) * static_cast<double>(k) / static_cast<double>(cfg.fft_len);
  }
  auto nearest = [&f](double target) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < f.size(); ++k) {
      if ((f[k] - target) * (f[k] - target) < (f[best] - target) * (f[best] - target)) best = k;
    }
    return best;
  };
  std::vector<std::vector<double>> obm(static_cast<std::size_t>(cfg.bands), std::vector<double>(bins, 0.0));
  for (int b = 0; b < cfg.bands; ++b) {
    const std::size_t lo = nearest(cfg.min_freq_hz * std::pow(2.0, (2.0 * b - 1.0) / 6.0));
    const std::size_t hi = nearest(cfg.min_freq_hz * std::pow(2.0, (2.0 * b + 1.0) / 6.0));
    for (std::size_t k = lo; k < hi; ++k) obm[static_cast<std::size_t>(b)][k] = 1.0;
  }
  return obm;
}

double stoi(const AudioClip& clean, const AudioClip& degraded, const StoiConfig& cfg) {
  if (clean.sample_rate_hz != degraded.sample_rate_hz) {
    fail(ErrorCode::RateMismatch, "clean and degraded clips have different sample rates");
  }
  check_lengths(clean.samples.size(), degraded.samples.size());
  const std::vector<double> x(clean.samples.begin(), clean.samples.end());
  const std::vector<double> y(degraded.samples.begin(), degraded.samples.end());
  return stoi(x, y, clean.sample_rate_hz, cfg);
}

double stoi(std::span<const double> clean, std::span<const double> degraded, int sample_rate_hz,
            const StoiConfig& cfg) {
  check_lengths(clean.size(), degraded.size());
  std::vector<double> x(clean.begin(), clean.end());
  std::vector<double> y(degraded.begin(), degraded.end());
  if (sample_rate_hz != cfg.sample_rate_hz) {
    x = dsp::resample(x, sample_rate_hz, cfg.sample_rate_hz);
    y = dsp::resample(y, sample_rate_hz, cfg.sample_rate_hz);
  }
  remove_silent_frames(x, y, cfg);

  static const auto default_obm = third_octave_bands(StoiConfig{});
  const bool is_default = cfg.sample_rate_hz == 10000 && cfg.fft_len == 512 && cfg.bands == 15 &&
                          cfg.min_freq_hz == 150.0;
  const auto obm = is_default ? default_obm : third_octave_bands(cfg);

  std::size_t frames = 0;
  std::size_t frames_y = 0;
  const auto xb = band_envelopes(x, obm, cfg, frames);
  const auto yb = band_envelopes(y, obm, cfg, frames_y);
  const std::size_t n = cfg.segment_frames;
  if (frames < n) {
    fail(ErrorCode::TooShort, std::to_string(frames) + " non-silent frames, STOI needs " + std::to_string(n));
  }

  const std::size_t bands = obm.size();
  const double clip = std::pow(10.0, -cfg.beta_db / 20.0);
  std::vector<double> xs(n);
  std::vector<double> ys(n);
  double total = 0.0;
  const std::size_t segments = frames - n + 1;
  for (std::size_t m = 0; m < segments; ++m) {
    for (std::size_t b = 0; b < bands; ++b) {
      const double* xr = xb.data() + b * frames + m;
      const double* yr = yb.data() + b * frames + m;
      const double scale = norm(xr, n) / (norm(yr, n) + kEps);
      double xm = 0.0;
      double ym = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        xs[i] = xr[i];
        ys[i] = std::min(yr[i] * scale, xr[i] * (1.0 + clip));
        xm += xs[i];
        ym += ys[i];
      }
      xm /= static_cast<double>(n);
      ym /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        xs[i] -= xm;
        ys[i] -= ym;
      }
      const double xn = norm(xs.data(), n) + kEps;
      const double yn = norm(ys.data(), n) + kEps;
      double corr = 0.0;
      for (std::size_t i = 0; i < n; ++i) corr += (xs[i] / xn) * (ys[i] / yn);
      total += corr;
    }
  }
  return total / static_cast<double>(segments * bands);
}

double si_snr(const AudioClip& estimate, const AudioClip& target) {
  const std::vector<double> e(estimate.samples.begin(), estimate.samples.end());
  const std::vector<double> t(target.samples.begin(), target.samples.end());
  return si_snr(e, t);
}

double si_snr(std::span<const double> estimate, std::span<const double> target) {
  check_lengths(estimate.size(), target.size());
  double tt = 0.0;
  double et = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    tt += target[i] * target[i];
    et += estimate[i] * target[i];
  }
  if (tt == 0.0) fail(ErrorCode::SilentTarget, "target has zero energy");
  const double a = et / tt;
  double ss = 0.0;
  double ee = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double s = a * target[i];
    const double r = estimate[i] - s;
    ss += s * s;
    ee += r * r;
  }
  if (ss == 0.0) return -kSiSnrCapDb;  // nothing of the target survives, including a silent estimate
  if (ee == 0.0) return kSiSnrCapDb;
  return std::clamp(10.0 * std::log10(ss / ee), -kSiSnrCapDb, kSiSnrCapDb);
}

double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorCode::EmptyInput, "median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

const MedianRow* EvalReport::find(std::optional<double> condition_db) const {
  for (const auto& row : medians) {
    if (row.condition_db == condition_db) return &row;
  }
  return nullptr;
}

EvalReport aggregate_median(std::vector<EvalRecord> records) {
  std::sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
    if (a.entry != b.entry) return a.entry < b.entry;
    if (a.snr_condition_db != b.snr_condition_db) return a.snr_condition_db < b.snr_condition_db;
    if (a.stoi != b.stoi) return a.stoi < b.stoi;
    return a.si_snr_db < b.si_snr_db;
  });
  EvalReport report;
  report.records = records;
  if (records.empty()) return report;

  auto row_for = [](std::optional<double> cond, const std::vector<const EvalRecord*>& group) {
    MedianRow row;
    row.condition_db = cond;
    row.count = group.size();
    std::vector<double> s, q, p;
    for (const auto* r : group) {
      s.push_back(r->stoi);
      q.push_back(r->si_snr_db);
      if (r->pesq) p.push_back(*r->pesq);
    }
    row.stoi = median(s);
    row.si_snr_db = median(q);
    if (!p.empty()) row.pesq = median(p);
    return row;
  };

  std::vector<const EvalRecord*> all;
  std::map<double, std::vector<const EvalRecord*>> groups;
  for (const auto& r : report.records) {
    all.push_back(&r);
    groups[r.snr_condition_db].push_back(&r);
  }
  report.medians.push_back(row_for(std::nullopt, all));
  for (const auto& [cond, group] : groups) report.medians.push_back(row_for(cond, group));
  return report;
}

std::string condition_label(std::optional<double> condition_db) {
  if (!condition_db) return "Overall";
  return fmt("%g dB", *condition_db);
}

std::string records_csv(const EvalReport& report) {
  const bool with_pesq = std::any_of(report.records.begin(), report.records.end(),
                                     [](const EvalRecord& r) { return r.pesq.has_value(); });
  std::string out = with_pesq ? "entry,snr_db,stoi,si_snr,pesq\n" : "entry,snr_db,stoi,si_snr\n";
  for (const auto& r : report.records) {
    out += r.entry + "," + fmt("%g", r.snr_condition_db) + "," + fmt("%.6f", r.stoi) + "," +
           fmt("%.6f", r.si_snr_db);
    if (with_pesq) out += "," + (r.pesq ? fmt("%.6f", *r.pesq) : std::string());
    out += "\n";
  }
  return out;
}

std::string medians_csv(const EvalReport& report) {
  std::string out = "condition,count,stoi,si_snr,pesq\n";
  for (const auto& row : report.medians) {
    out += condition_label(row.condition_db) + "," + std::to_string(row.count) + "," + fmt("%.6f", row.stoi) + "," +
           fmt("%.6f", row.si_snr_db) + "," + (row.pesq ? fmt("%.6f", *row.pesq) : std::string()) + "\n";
  }
  return out;
}

std::vector<EvalRecord> parse_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::CorruptHeader, "empty evaluation CSV");
  const auto header = split(line);
  const bool with_pesq = header.size() == 5 && header[4] == "pesq";
  if (header.size() < 4 || header[0] != "entry" || header[1] != "snr_db" || header[2] != "stoi" ||
      header[3] != "si_snr") {
    fail(ErrorCode::CorruptHeader, "evaluation CSV header must start with entry,snr_db,stoi,si_snr");
  }
  std::vector<EvalRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) fail(ErrorCode::CorruptHeader, "malformed evaluation row: " + line);
    EvalRecord r;
    r.entry = cells[0];
    r.snr_condition_db = parse_number(cells[1], "snr_db");
    r.stoi = parse_number(cells[2], "stoi");
    r.si_snr_db = parse_number(cells[3], "si_snr");
    if (with_pesq && !cells[4].empty()) r.pesq = parse_number(cells[4], "pesq");
    out.push_back(std::move(r));
  }
  return out;
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) fail(ErrorCode::Io, "cannot write " + p.string());
  };
  write(path, records_csv(report));
  auto medians_path = path;
  medians_path.replace_filename(path.stem().string() + "_medians.csv");
  write(medians_path, medians_csv(report));
}

EvalReport read_eval_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return aggregate_median(parse_records_csv(ss.str()));
}

}  // namespace edgespeech::metrics
