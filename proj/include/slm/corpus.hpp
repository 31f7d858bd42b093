#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace slm {

enum class Speaker { O1, O2 };

std::string speaker_tag(Speaker s);
Speaker parse_speaker(const std::string & tag);

struct UtteranceRecord {
    std::string utt_id;
    std::string audio_ref;
    std::string text;
    std::string language;   // ISO 639-1
    std::string dialogue_id;
    Speaker speaker_id = Speaker::O1;
    double start_time = 0.0;
    double end_time = 0.0;
};

struct Conversation {
    std::string dialogue_id;
    std::vector<UtteranceRecord> turns; // sorted ascending by start_time
};

struct SyntheticCorpusSpec {
    int n_dialogues = 1;
    int turns_per_dialogue = 1;
    std::vector<std::string> vocabulary; // one symbol per entry
    int sample_rate = 16000;
    uint64_t seed = 0;
    int min_symbols_per_turn = 2;
    int max_symbols_per_turn = 5;
    // When > 0, each turn repeats one symbol of the previous turn with this
    // probability, making context statistically predictive of the utterance.
    double context_carryover = 0.0;
    // Peak-relative Gaussian noise added to each waveform (0 disables).
    double noise_level = 0.0;
};

// In-memory waveform store keyed by utt_id.
struct WaveformStore {
    int sample_rate = 16000;
    std::map<std::string, std::vector<double>> waves;
};

// Manifest IO: UTF-8, one JSON object per line, eight UtteranceRecord fields.
// Unknown fields are ignored with a warning on stderr.
std::vector<UtteranceRecord> load_manifest(const std::string & path);
void write_manifest(const std::string & path, const std::vector<UtteranceRecord> & records);

// Groups records by dialogue_id and sorts each dialogue by start_time.
// Overlapping turns are ordered by start_time.
std::vector<Conversation> reconstruct_conversations(const std::vector<UtteranceRecord> & records);

// Deterministic toy corpus: each vocabulary symbol maps to a 100 ms pure tone
// at 200 Hz + 100 Hz * index, so the transcript is recoverable from the audio
// by construction. Speakers alternate O1/O2 and timestamps are sequential
// with 0.1 s gaps.
std::pair<std::vector<UtteranceRecord>, WaveformStore>
generate_synthetic_corpus(const SyntheticCorpusSpec & spec);

// Waveform store on disk: 16-bit PCM mono, one <utt_id>.pcm per utterance,
// sample rate in a store.json sidecar.
void save_waveform_store(const WaveformStore & store, const std::string & dir);
WaveformStore load_waveform_store(const std::string & dir);
std::vector<double> load_waveform(const std::string & dir, const std::string & utt_id);

// Tone duration used by the synthetic corpus, in seconds per symbol.
inline constexpr double kToneSeconds = 0.1;

} // namespace slm
