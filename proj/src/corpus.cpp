#include "slm/corpus.hpp"
#include "slm/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace slm {

std::string speaker_tag(Speaker s) {
    return s == Speaker::O1 ? "O1" : "O2";
}

Speaker parse_speaker(const std::string & tag) {
    if (tag == "O1") return Speaker::O1;
    if (tag == "O2") return Speaker::O2;
    throw std::invalid_argument("speaker_id must be O1 or O2, got '" + tag + "'");
}

static const char * kFields[] = {
    "utt_id", "audio_ref", "text", "language",
    "dialogue_id", "speaker_id", "start_time", "end_time",
};

static void validate_record(const UtteranceRecord & r, int line_no) {
    if (r.end_time <= r.start_time) {
        throw std::runtime_error("manifest line " + std::to_string(line_no) +
                                 ": end_time must be > start_time for utt '" + r.utt_id + "'");
    }
}

std::vector<UtteranceRecord> load_manifest(const std::string & path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open manifest: " + path);
    }
    std::vector<UtteranceRecord> records;
    std::set<std::string> seen_ids;
    std::set<std::pair<std::string, double>> seen_keys;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error & e) {
            throw std::runtime_error("manifest line " + std::to_string(line_no) +
                                     ": parse error: " + e.what());
        }
        for (const char * f : kFields) {
            if (!j.contains(f)) {
                throw std::runtime_error("manifest line " + std::to_string(line_no) +
                                         ": missing field '" + f + "'");
            }
        }
        for (auto it = j.begin(); it != j.end(); ++it) {
            bool known = false;
            for (const char * f : kFields) {
                if (it.key() == f) { known = true; break; }
            }
            if (!known) {
                std::fprintf(stderr, "warning: manifest line %d: ignoring unknown field '%s'\n",
                             line_no, it.key().c_str());
            }
        }
        UtteranceRecord r;
        try {
            r.utt_id = j.at("utt_id").get<std::string>();
            r.audio_ref = j.at("audio_ref").get<std::string>();
            r.text = j.at("text").get<std::string>();
            r.language = j.at("language").get<std::string>();
            r.dialogue_id = j.at("dialogue_id").get<std::string>();
            r.speaker_id = parse_speaker(j.at("speaker_id").get<std::string>());
            r.start_time = j.at("start_time").get<double>();
            r.end_time = j.at("end_time").get<double>();
        } catch (const std::exception & e) {
            throw std::runtime_error("manifest line " + std::to_string(line_no) +
                                     ": bad field: " + e.what());
        }
        validate_record(r, line_no);
        if (!seen_ids.insert(r.utt_id).second) {
            throw std::runtime_error("manifest line " + std::to_string(line_no) +
                                     ": duplicate utt_id '" + r.utt_id + "'");
        }
        if (!seen_keys.insert({r.dialogue_id, r.start_time}).second) {
            throw std::runtime_error("manifest line " + std::to_string(line_no) +
                                     ": duplicate (dialogue_id, start_time) key (" +
                                     r.dialogue_id + ", " + std::to_string(r.start_time) + ")");
        }
        records.push_back(std::move(r));
    }
    return records;
}

void write_manifest(const std::string & path, const std::vector<UtteranceRecord> & records) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write manifest: " + path);
    }
    for (const auto & r : records) {
        json j;
        j["utt_id"] = r.utt_id;
        j["audio_ref"] = r.audio_ref;
        j["text"] = r.text;
        j["language"] = r.language;
        j["dialogue_id"] = r.dialogue_id;
        j["speaker_id"] = speaker_tag(r.speaker_id);
        j["start_time"] = r.start_time;
        j["end_time"] = r.end_time;
        out << j.dump() << "\n";
    }
}

std::vector<Conversation> reconstruct_conversations(const std::vector<UtteranceRecord> & records) {
    std::map<std::string, Conversation> by_id;
    for (const auto & r : records) {
        auto & conv = by_id[r.dialogue_id];
        conv.dialogue_id = r.dialogue_id;
        conv.turns.push_back(r);
    }
    std::vector<Conversation> out;
    out.reserve(by_id.size());
    for (auto & [id, conv] : by_id) {
        std::sort(conv.turns.begin(), conv.turns.end(),
                  [](const UtteranceRecord & a, const UtteranceRecord & b) {
                      return a.start_time < b.start_time;
                  });
        out.push_back(std::move(conv));
    }
    return out;
}

std::pair<std::vector<UtteranceRecord>, WaveformStore>
generate_synthetic_corpus(const SyntheticCorpusSpec & spec) {
    if (spec.vocabulary.empty()) {
        throw std::invalid_argument("synthetic corpus: vocabulary must be non-empty");
    }
    if (spec.n_dialogues < 1 || spec.turns_per_dialogue < 1 || spec.sample_rate < 1) {
        throw std::invalid_argument("synthetic corpus: all counts must be >= 1");
    }
    if (spec.min_symbols_per_turn < 1 || spec.max_symbols_per_turn < spec.min_symbols_per_turn) {
        throw std::invalid_argument("synthetic corpus: bad symbols-per-turn range");
    }

    std::vector<UtteranceRecord> records;
    WaveformStore store;
    store.sample_rate = spec.sample_rate;

    const int tone_samples = static_cast<int>(std::lround(kToneSeconds * spec.sample_rate));
    auto rng = make_rng(spec.seed);
    std::uniform_int_distribution<int> len_dist(spec.min_symbols_per_turn, spec.max_symbols_per_turn);
    std::uniform_int_distribution<size_t> sym_dist(0, spec.vocabulary.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (int d = 0; d < spec.n_dialogues; ++d) {
        const std::string dialogue_id = "dlg" + std::to_string(d);
        double t = 0.0;
        std::vector<size_t> prev_symbols;
        for (int k = 0; k < spec.turns_per_dialogue; ++k) {
            const int n_sym = len_dist(rng);
            std::vector<size_t> symbols(n_sym);
            for (int s = 0; s < n_sym; ++s) {
                symbols[s] = sym_dist(rng);
            }
            if (spec.context_carryover > 0.0 && !prev_symbols.empty() &&
                unit(rng) < spec.context_carryover) {
                std::uniform_int_distribution<size_t> pick(0, prev_symbols.size() - 1);
                symbols[0] = prev_symbols[pick(rng)];
            }

            std::string text;
            std::vector<double> wave;
            wave.reserve(static_cast<size_t>(n_sym) * tone_samples);
            for (size_t idx : symbols) {
                text += spec.vocabulary[idx];
                const double freq = 200.0 + 100.0 * static_cast<double>(idx);
                for (int n = 0; n < tone_samples; ++n) {
                    wave.push_back(0.5 * std::sin(2.0 * std::numbers::pi * freq * n / spec.sample_rate));
                }
            }
            if (spec.noise_level > 0.0) {
                for (auto & x : wave) {
                    x += spec.noise_level * 0.5 * gauss(rng);
                }
            }

            UtteranceRecord r;
            r.utt_id = dialogue_id + "_t" + std::to_string(k);
            r.audio_ref = r.utt_id;
            r.text = text;
            r.language = "xx";
            r.dialogue_id = dialogue_id;
            r.speaker_id = (k % 2 == 0) ? Speaker::O1 : Speaker::O2;
            r.start_time = t;
            r.end_time = t + static_cast<double>(wave.size()) / spec.sample_rate;
            t = r.end_time + 0.1;

            store.waves[r.utt_id] = std::move(wave);
            records.push_back(std::move(r));
            prev_symbols = std::move(symbols);
        }
    }
    return {std::move(records), std::move(store)};
}

static int16_t to_pcm16(double x) {
    double v = std::clamp(x, -1.0, 1.0) * 32767.0;
    return static_cast<int16_t>(std::lrint(v));
}

void save_waveform_store(const WaveformStore & store, const std::string & dir) {
    fs::create_directories(dir);
    for (const auto & [id, wave] : store.waves) {
        std::ofstream out(fs::path(dir) / (id + ".pcm"), std::ios::binary);
        if (!out) {
            throw std::runtime_error("cannot write pcm for utt '" + id + "'");
        }
        for (double x : wave) {
            int16_t s = to_pcm16(x);
            unsigned char b[2] = {static_cast<unsigned char>(s & 0xff),
                                  static_cast<unsigned char>((s >> 8) & 0xff)};
            out.write(reinterpret_cast<const char *>(b), 2);
        }
    }
    json meta;
    meta["sample_rate"] = store.sample_rate;
    meta["format"] = "pcm_s16le_mono";
    std::ofstream m(fs::path(dir) / "store.json");
    m << meta.dump(2) << "\n";
}

static std::vector<double> read_pcm(const fs::path & p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open pcm file: " + p.string());
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() % 2 != 0) {
        throw std::runtime_error("truncated pcm file: " + p.string());
    }
    std::vector<double> wave(bytes.size() / 2);
    for (size_t i = 0; i < wave.size(); ++i) {
        int16_t s = static_cast<int16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
        wave[i] = static_cast<double>(s) / 32767.0;
    }
    return wave;
}

static int read_store_rate(const std::string & dir) {
    std::ifstream m(fs::path(dir) / "store.json");
    if (!m) {
        throw std::runtime_error("missing store.json sidecar in " + dir);
    }
    json meta = json::parse(m);
    return meta.at("sample_rate").get<int>();
}

WaveformStore load_waveform_store(const std::string & dir) {
    WaveformStore store;
    store.sample_rate = read_store_rate(dir);
    for (const auto & entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".pcm") {
            store.waves[entry.path().stem().string()] = read_pcm(entry.path());
        }
    }
    return store;
}

std::vector<double> load_waveform(const std::string & dir, const std::string & utt_id) {
    return read_pcm(fs::path(dir) / (utt_id + ".pcm"));
}

} // namespace slm
