#include "blendnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

#include "blendnet/errors.hpp"
#include "blendnet/serialize.hpp"

namespace blendnet {

void SynthSpec::validate() const {
  if (d == 0 || num_clips == 0 || frames_per_clip == 0 || num_event_types == 0 || num_samples == 0) {
    throw UsageError("synthetic spec needs d, clips, frames, event types and samples >= 1");
  }
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw UsageError("noise_std must be finite and >= 0");
  if (num_event_types + 2 > d) {
    throw UsageError("need d >= event types + 2 to keep " + std::to_string(num_event_types) +
                     " signatures, the background and the query orthogonal, got d=" + std::to_string(d));
  }
  if (num_event_types > answer_vocab) {
    throw UsageError("event types (" + std::to_string(num_event_types) + ") exceed the answer vocabulary (" +
                     std::to_string(answer_vocab) + ")");
  }
  if (task == Task::multi_choice && (num_candidates < 2 || num_candidates > num_event_types)) {
    throw UsageError("multi_choice needs 2 <= candidates <= event types, got " + std::to_string(num_candidates) +
                     " candidates for " + std::to_string(num_event_types) + " event types");
  }
}

namespace {

using Vec = std::vector<double>;

// Gaussian draw orthogonalized against `basis` and normalized.
Vec orthonormal_draw(const std::vector<Vec>& basis, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (;;) {
    Vec v(d);
    for (double& x : v) x = gauss(rng);
    for (const Vec& b : basis) {
      const double dot = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * b[i];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    return v;
  }
}

Matrix<float> as_column(const Vec& v) {
  Matrix<float> m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m[i] = static_cast<float>(v[i]);
  return m;
}

std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t index) {
  const auto i = static_cast<std::uint64_t>(index);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
  return std::mt19937_64(seq);
}

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

VideoSample make_sample(const SynthSpec& spec, const EventBank& bank, std::mt19937_64& rng) {
  const std::size_t d = spec.d, total = spec.total_frames(), events = spec.num_event_types;
  constexpr std::ptrdiff_t background = -1;
  std::vector<std::ptrdiff_t> frame_event(total, background);
  VideoSample s;

  if (spec.task == Task::count) {
    const std::size_t queried = uniform(rng, 0, events - 1);
    const std::size_t k = uniform(rng, 0, total);
    std::fill_n(frame_event.begin(), k, static_cast<std::ptrdiff_t>(queried));
    s.label = static_cast<std::int64_t>(k);
    s.question = bank.query;
    for (std::size_t i = 0; i < d; ++i) s.question[i] += bank.signatures[queried][i];
  } else {
    const std::size_t dominant = uniform(rng, 0, events - 1);
    const std::size_t span = uniform(rng, total / 2 + 1, total);
    std::size_t other = dominant;
    if (events > 1) {
      other = uniform(rng, 0, events - 2);
      if (other >= dominant) ++other;
    }
    for (std::size_t t = 0; t < total; ++t)
      frame_event[t] = static_cast<std::ptrdiff_t>(t < span ? dominant : other);
    s.question = bank.query;
    s.label = static_cast<std::int64_t>(dominant);
    if (spec.task == Task::multi_choice) {
      std::vector<std::size_t> others;
      for (std::size_t e = 0; e < events; ++e)
        if (e != dominant) others.push_back(e);
      std::shuffle(others.begin(), others.end(), rng);
      std::vector<std::size_t> chosen{dominant};
      chosen.insert(chosen.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(spec.num_candidates - 1));
      std::shuffle(chosen.begin(), chosen.end(), rng);
      for (std::size_t k = 0; k < chosen.size(); ++k) {
        s.candidates.push_back(bank.signatures[chosen[k]]);
        if (chosen[k] == dominant) s.label = static_cast<std::int64_t>(k);
      }
    }
  }
  std::shuffle(frame_event.begin(), frame_event.end(), rng);

  std::normal_distribution<double> noise(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);
  const std::size_t frames = spec.frames_per_clip;
  Matrix<float> video_motion(d, 1);
  for (std::size_t c = 0; c < spec.num_clips; ++c) {
    Matrix<float> clip(d, frames);
    for (std::size_t t = 0; t < frames; ++t) {
      const std::ptrdiff_t e = frame_event[c * frames + t];
      for (std::size_t i = 0; i < d; ++i) {
        const Matrix<float>& sig = e == background ? bank.background : bank.signatures[static_cast<std::size_t>(e)];
        double v = static_cast<double>(sig[i]);
        if (spec.noise_std > 0.0) v += noise(rng);
        clip(i, t) = static_cast<float>(v);
      }
    }
    // Mean frame-to-frame difference telescopes to (last - first) / (frames - 1).
    Matrix<float> motion(d, 1);
    if (frames > 1) {
      for (std::size_t i = 0; i < d; ++i)
        motion[i] = (clip(i, frames - 1) - clip(i, 0)) / static_cast<float>(frames - 1);
    }
    for (std::size_t i = 0; i < d; ++i) video_motion[i] += motion[i];
    s.clip_frames.push_back(std::move(clip));
    s.clip_motion.push_back(std::move(motion));
  }
  for (float& v : video_motion.data()) v /= static_cast<float>(spec.num_clips);
  s.video_motion = std::move(video_motion);
  return s;
}

}  // namespace

EventBank make_event_bank(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<Vec> basis;
  EventBank bank;
  for (std::size_t e = 0; e < spec.num_event_types; ++e) {
    basis.push_back(orthonormal_draw(basis, spec.d, rng));
    bank.signatures.push_back(as_column(basis.back()));
  }
  basis.push_back(orthonormal_draw(basis, spec.d, rng));
  bank.background = as_column(basis.back());
  // A separate stream per task so the query differs between tasks at one seed.
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(spec.task) + 1u};
  std::mt19937_64 query_rng(seq);
  bank.query = as_column(orthonormal_draw(basis, spec.d, query_rng));
  return bank;
}

std::size_t DatasetHeader::floats_per_sample() const {
  return num_clips * d * frames_per_clip + num_clips * d + d + d + num_candidates * d;
}

Dataset generate(const SynthSpec& spec) {
  const EventBank bank = make_event_bank(spec);
  Dataset data;
  data.header.task = spec.task;
  data.header.d = spec.d;
  data.header.num_clips = spec.num_clips;
  data.header.frames_per_clip = spec.frames_per_clip;
  data.header.num_candidates = spec.task == Task::multi_choice ? spec.num_candidates : 0;
  data.header.answer_vocab = spec.answer_vocab;
  data.samples.reserve(spec.num_samples);
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    std::mt19937_64 rng = sample_rng(spec.seed, i);
    data.samples.push_back(make_sample(spec, bank, rng));
  }
  return data;
}

std::filesystem::path manifest_path(const std::filesystem::path& base) {
  std::filesystem::path p = base;
  p += ".manifest";
  return p;
}

std::filesystem::path blob_path(const std::filesystem::path& base) {
  std::filesystem::path p = base;
  p += ".blob";
  return p;
}

namespace {

constexpr const char* kMagic = "blendnet-dataset 1";

void check_sample_shape(const DatasetHeader& h, const VideoSample& s, std::size_t index) {
  auto fits = [](const Matrix<float>& m, std::size_t r, std::size_t c) { return m.rows() == r && m.cols() == c; };
  bool ok = s.clip_frames.size() == h.num_clips && s.clip_motion.size() == h.num_clips &&
            s.candidates.size() == h.num_candidates && fits(s.video_motion, h.d, 1) && fits(s.question, h.d, 1);
  for (std::size_t c = 0; ok && c < h.num_clips; ++c)
    ok = fits(s.clip_frames[c], h.d, h.frames_per_clip) && fits(s.clip_motion[c], h.d, 1);
  for (const auto& a : s.candidates) ok = ok && fits(a, h.d, 1);
  if (!ok) throw ShapeError("sample " + std::to_string(index) + " does not match the dataset header");
}

std::uint64_t parse_number(const std::string& text, const std::string& what) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    throw MalformedManifestError("manifest field " + what + " is not a nonnegative integer: '" + text + "'");
  }
  try {
    return std::stoull(text);
  } catch (const std::out_of_range&) {
    throw MalformedManifestError("manifest field " + what + " is out of range: '" + text + "'");
  }
}

std::string expect_field(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw MalformedManifestError("manifest ends before '" + key + "'");
  const std::string prefix = key + "=";
  if (line.rfind(prefix, 0) != 0) throw MalformedManifestError("expected '" + prefix + "...', got '" + line + "'");
  return line.substr(prefix.size());
}

}  // namespace

void write_dataset(const Dataset& data, const std::filesystem::path& base) {
  const DatasetHeader& h = data.header;
  std::ostringstream blob;
  std::ostringstream manifest;
  manifest << kMagic << '\n'
           << "task=" << to_string(h.task) << '\n'
           << "d=" << h.d << '\n'
           << "num_clips=" << h.num_clips << '\n'
           << "frames_per_clip=" << h.frames_per_clip << '\n'
           << "num_candidates=" << h.num_candidates << '\n'
           << "answer_vocab=" << h.answer_vocab << '\n'
           << "samples=" << data.samples.size() << '\n';
  const std::size_t length = h.floats_per_sample() * 4;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const VideoSample& s = data.samples[i];
    check_sample_shape(h, s, i);
    if (s.label < 0) throw UsageError("sample " + std::to_string(i) + " has a negative label");
    const auto offset = static_cast<std::size_t>(blob.tellp());
    auto put = [&blob](const Matrix<float>& m) {
      for (float v : m.data()) write_f32(blob, v);
    };
    for (const auto& m : s.clip_frames) put(m);
    for (const auto& m : s.clip_motion) put(m);
    put(s.video_motion);
    put(s.question);
    for (const auto& m : s.candidates) put(m);
    manifest << "sample=" << i << " label=" << s.label << " offset=" << offset << " length=" << length << '\n';
  }
  auto dump = [](const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + p.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + p.string());
  };
  dump(blob_path(base), blob.str());
  dump(manifest_path(base), manifest.str());
}

Dataset read_dataset(const std::filesystem::path& base) {
  std::ifstream manifest(manifest_path(base));
  if (!manifest) throw Error("cannot open " + manifest_path(base).string());
  std::ifstream blob_file(blob_path(base), std::ios::binary);
  if (!blob_file) throw Error("cannot open " + blob_path(base).string());
  const std::string blob((std::istreambuf_iterator<char>(blob_file)), std::istreambuf_iterator<char>());

  std::string line;
  if (!std::getline(manifest, line) || line != kMagic) throw MalformedManifestError("not a blendnet dataset manifest");
  Dataset data;
  DatasetHeader& h = data.header;
  try {
    h.task = parse_task(expect_field(manifest, "task"));
  } catch (const ConfigError& e) {
    throw MalformedManifestError(e.what());
  }
  h.d = parse_number(expect_field(manifest, "d"), "d");
  h.num_clips = parse_number(expect_field(manifest, "num_clips"), "num_clips");
  h.frames_per_clip = parse_number(expect_field(manifest, "frames_per_clip"), "frames_per_clip");
  h.num_candidates = parse_number(expect_field(manifest, "num_candidates"), "num_candidates");
  h.answer_vocab = parse_number(expect_field(manifest, "answer_vocab"), "answer_vocab");
  const std::uint64_t count = parse_number(expect_field(manifest, "samples"), "samples");
  if (h.d == 0 || h.num_clips == 0 || h.frames_per_clip == 0 || h.d > (1u << 20) || h.num_clips > (1u << 20) ||
      h.frames_per_clip > (1u << 20) || h.num_candidates > (1u << 20)) {
    throw MalformedManifestError("manifest header dimensions out of range");
  }
  if ((h.task == Task::multi_choice) != (h.num_candidates > 0)) {
    throw MalformedManifestError("num_candidates must be positive exactly for multi_choice");
  }
  const std::uint64_t expected_length = h.floats_per_sample() * 4;

  for (std::uint64_t i = 0; i < count; ++i) {
    if (!std::getline(manifest, line)) {
      throw MalformedManifestError("manifest lists " + std::to_string(i) + " of " + std::to_string(count) + " samples");
    }
    std::istringstream fields(line);
    std::string f_index, f_label, f_offset, f_length, extra;
    fields >> f_index >> f_label >> f_offset >> f_length;
    auto value = [&line](const std::string& field, const std::string& key) {
      if (field.rfind(key + "=", 0) != 0) throw MalformedManifestError("malformed sample record '" + line + "'");
      return parse_number(field.substr(key.size() + 1), key);
    };
    if (fields >> extra) throw MalformedManifestError("trailing data in sample record '" + line + "'");
    const std::uint64_t index = value(f_index, "sample");
    const std::uint64_t label = value(f_label, "label");
    const std::uint64_t offset = value(f_offset, "offset");
    const std::uint64_t length = value(f_length, "length");
    if (index != i) throw MalformedManifestError("sample record " + std::to_string(i) + " is numbered " + std::to_string(index));
    if (length != expected_length) {
      throw MalformedManifestError("sample " + std::to_string(i) + " length " + std::to_string(length) +
                                   " does not match the header (" + std::to_string(expected_length) + " bytes)");
    }
    if (offset > blob.size()) {
      throw OffsetRangeError("sample " + std::to_string(i) + " offset " + std::to_string(offset) +
                             " lies beyond the blob (" + std::to_string(blob.size()) + " bytes)");
    }
    if (length > blob.size() - offset) {
      throw TruncatedBlobError("sample " + std::to_string(i) + " needs bytes " + std::to_string(offset) + ".." +
                               std::to_string(offset + length) + " but the blob holds " + std::to_string(blob.size()));
    }
    std::istringstream payload(blob.substr(offset, length));
    auto take = [&payload](std::size_t r, std::size_t c) {
      Matrix<float> m(r, c);
      for (float& v : m.data()) v = read_f32(payload);
      return m;
    };
    VideoSample s;
    for (std::size_t c = 0; c < h.num_clips; ++c) s.clip_frames.push_back(take(h.d, h.frames_per_clip));
    for (std::size_t c = 0; c < h.num_clips; ++c) s.clip_motion.push_back(take(h.d, 1));
    s.video_motion = take(h.d, 1);
    s.question = take(h.d, 1);
    for (std::size_t k = 0; k < h.num_candidates; ++k) s.candidates.push_back(take(h.d, 1));
    s.label = static_cast<std::int64_t>(label);
    data.samples.push_back(std::move(s));
  }
  if (std::getline(manifest, line) && !line.empty()) {
    throw MalformedManifestError("manifest has records beyond the declared " + std::to_string(count) + " samples");
  }
  return data;
}

}  // namespace blendnet
