// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Synthetic audio and corpora shared by the unit tests and the acceptance
// suite. Everything is generated from seeds; nothing is read from disk.

#ifndef DASR_TESTS_FIXTURES_HPP
#define DASR_TESTS_FIXTURES_HPP

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dasr/diarization.hpp"
#include "dasr/scoring.hpp"
#include "dasr/signal.hpp"
#include "dasr/simulator.hpp"

namespace dasr::fixtures {

// Box-Muller over the portable uniform draw.
double gaussian(std::mt19937_64& rng);

Waveform white_noise(std::uint64_t seed, Index channels, Index samples, double stddev = 1.0);

struct Voice {
  double f0 = 120.0;
  double formant1 = 500.0;
  double formant2 = 1500.0;
};

Voice voice_for(int speaker_index);

struct Utterance {
  Waveform audio;
  std::vector<WordTiming> words;  // utterance-relative times
};

// Harmonic bursts shaped by two resonances, one burst per word, with short
// inter-word gaps and a few long pauses.
Utterance synthetic_utterance(const Voice& voice, std::uint64_t seed, int num_words);

// Center microphone plus six on a 4.25 cm circle, meters.
std::vector<std::array<double, 2>> array_geometry();

// Far-field direct path, early reflections and an exponentially decaying
// diffuse tail. channels is 1 (center mic) or 7.
Rir synthetic_rir(std::uint64_t seed, Index channels, double azimuth_rad, double distance_m,
                  double rt60_s, const std::string& room, const std::string& position);

// Pure exponential decay (Gaussian noise with a 60 dB / rt60 envelope).
Rir exponential_rir(std::uint64_t seed, double rt60_s, double length_s);

struct Corpus {
  SimulationPool pool;
  std::map<std::string, std::vector<WordTiming>> words;  // by utterance path
};

// speakers x utterances_per_speaker utterances (MOS chosen so each speaker
// keeps its best utterance after the quartile filter), rooms x positions
// RIRs and one noise recording per room.
Corpus synthetic_corpus(std::uint64_t seed, int speakers, int utterances_per_speaker,
                        Index channels, int rooms, int positions);

// Identity oracle for windows cut from known separated streams: locates the
// window in its stream by exact sample match and returns the one-hot vector
// of the speaker whose image (direct+early plus reverb, reference channel)
// correlates best with it.
class BundleOracleEmbedder : public SpeakerEmbedder {
 public:
  BundleOracleEmbedder(const SupervisionBundle& bundle, std::vector<Waveform> streams,
                       Index ref_channel = 0);
  Vector<double> embed(const Waveform& window) const override;
  Index dimension() const override { return static_cast<Index>(images_.size()); }

 private:
  std::vector<Eigen::RowVectorXd> images_;
  std::vector<Waveform> streams_;
  struct Entry {
    std::uint64_t key;
    std::size_t stream;
    Index offset;
  };
  std::vector<Entry> index_;  // sorted by key
};

double si_snr_db(const Eigen::Ref<const Eigen::RowVectorXd>& estimate,
                 const Eigen::Ref<const Eigen::RowVectorXd>& reference);

// Energy leaking from other speakers' images into a stream's mask, relative
// to the dominant speaker's image energy under the same mask, in dB. Works
// in the padded STFT domain on the given channel.
struct CrossTalk {
  int dominant = -1;
  double ratio_db = 0.0;
};
CrossTalk stream_cross_talk(const SupervisionBundle& b, const Matrix<double>& mask,
                            const StftConfig& cfg, Index channel);

}  // namespace dasr::fixtures

#endif  // DASR_TESTS_FIXTURES_HPP
