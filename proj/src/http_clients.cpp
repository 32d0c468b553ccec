// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Eigen first: <resolv.h>, pulled in by httplib, defines a _res macro that
// collides with Eigen's parameter names.
#include "dasr/pipeline.hpp"
#include "dasr/wav.hpp"

#include <httplib.h>

#include <json.hpp>

namespace dasr {

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

nlohmann::json post(const std::string& url, const std::string& body,
                    const std::string& content_type, double timeout_s) {
  const Endpoint ep = split_endpoint(url);
  httplib::Client client(ep.base);
  const auto secs = static_cast<time_t>(timeout_s);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  auto res = client.Post(ep.path, body, content_type);
  if (!res) throw AsrError("request to " + url + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw AsrError("request to " + url + " returned HTTP " + std::to_string(res->status));
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw AsrError("malformed response from " + url + ": " + e.what());
  }
}

}  // namespace

HttpAsrClient::HttpAsrClient(std::string endpoint, double timeout_s)
    : endpoint_(std::move(endpoint)), timeout_s_(timeout_s) {
  split_endpoint(endpoint_);
}

std::vector<WordTiming> HttpAsrClient::transcribe(const Waveform& stream) {
  const auto bytes = encode_wav(stream, WavFormat::kFloat32);
  const nlohmann::json j =
      post(endpoint_, std::string(bytes.begin(), bytes.end()), "audio/wav", timeout_s_);
  std::vector<WordTiming> words;
  try {
    for (const auto& w : j.at("words"))
      words.push_back({w.at("text").get<std::string>(), w.at("start_s").get<double>(),
                       w.at("end_s").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw AsrError(std::string("malformed ASR response: ") + e.what());
  }
  return words;
}

HttpMaskEstimator::HttpMaskEstimator(std::string endpoint, Index num_streams, double timeout_s)
    : endpoint_(std::move(endpoint)), num_streams_(num_streams), timeout_s_(timeout_s) {
  split_endpoint(endpoint_);
}

MaskSet HttpMaskEstimator::estimate(const Spectrogram& segment, Index start_frame) {
  const Index frames = segment.frames();
  const Index bins = segment.num_bins();
  std::vector<double> re, im;
  re.reserve(static_cast<std::size_t>(segment.channels() * frames * bins));
  im.reserve(re.capacity());
  for (const auto& ch : segment.bins)
    for (Index t = 0; t < frames; ++t)
      for (Index f = 0; f < bins; ++f) {
        re.push_back(ch(t, f).real());
        im.push_back(ch(t, f).imag());
      }
  const nlohmann::json request = {{"start_frame", start_frame}, {"frames", frames},
                                  {"bins", bins},               {"channels", segment.channels()},
                                  {"real", re},                 {"imag", im}};
  const nlohmann::json j = post(endpoint_, request.dump(), "application/json", timeout_s_);

  auto read_mask = [&](const nlohmann::json& flat) {
    const auto v = flat.get<std::vector<double>>();
    if (static_cast<Index>(v.size()) != frames * bins)
      throw InvalidInput("external estimator returned a mask of the wrong size");
    Matrix<double> m(frames, bins);
    for (Index t = 0; t < frames; ++t)
      for (Index f = 0; f < bins; ++f) m(t, f) = v[static_cast<std::size_t>(t * bins + f)];
    return m;
  };
  MaskSet out;
  try {
    for (const auto& s : j.at("speech")) out.speech.push_back(read_mask(s));
    out.noise = read_mask(j.at("noise"));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed estimator response: ") + e.what());
  }
  return out;
}

}  // namespace dasr
