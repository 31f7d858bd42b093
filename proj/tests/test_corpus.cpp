#include "slm/corpus.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace slm;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    auto dir = fs::temp_directory_path() / "slm_corpus_test";
    fs::create_directories(dir);
    return dir;
}

std::vector<UtteranceRecord> sample_records() {
    return {
        {"d0_t0", "d0_t0", "hello", "en", "d0", Speaker::O1, 0.0, 1.0},
        {"d0_t1", "d0_t1", "world", "en", "d0", Speaker::O2, 1.2, 2.0},
        {"d1_t0", "d1_t0", "bonjour", "fr", "d1", Speaker::O1, 0.0, 0.8},
    };
}

// Goertzel power at one frequency; used to confirm the tone mapping.
double tone_power(const std::vector<double> & wave, size_t begin, size_t len, double freq,
                  int sample_rate) {
    const double w = 2.0 * M_PI * freq / sample_rate;
    double s0 = 0, s1 = 0, s2 = 0;
    for (size_t i = 0; i < len; i++) {
        s0 = wave[begin + i] + 2.0 * std::cos(w) * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    return s1 * s1 + s2 * s2 - 2.0 * std::cos(w) * s1 * s2;
}

} // namespace

TEST_CASE("manifest round trip preserves all eight fields") {
    const auto path = (test_dir() / "manifest.jsonl").string();
    auto records = sample_records();
    write_manifest(path, records);
    auto loaded = load_manifest(path);
    REQUIRE(loaded.size() == records.size());
    for (size_t i = 0; i < records.size(); i++) {
        CHECK(loaded[i].utt_id == records[i].utt_id);
        CHECK(loaded[i].audio_ref == records[i].audio_ref);
        CHECK(loaded[i].text == records[i].text);
        CHECK(loaded[i].language == records[i].language);
        CHECK(loaded[i].dialogue_id == records[i].dialogue_id);
        CHECK(loaded[i].speaker_id == records[i].speaker_id);
        CHECK(loaded[i].start_time == doctest::Approx(records[i].start_time));
        CHECK(loaded[i].end_time == doctest::Approx(records[i].end_time));
    }
}

TEST_CASE("manifest parse errors carry the line number") {
    const auto path = (test_dir() / "bad.jsonl").string();
    std::ofstream out(path);
    out << R"({"utt_id":"a","audio_ref":"a","text":"t","language":"en",)"
        << R"("dialogue_id":"d","speaker_id":"O1","start_time":0,"end_time":1})" << "\n";
    out << "{not json}\n";
    out.close();
    try {
        load_manifest(path);
        FAIL("expected a parse error");
    } catch (const std::exception & e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("duplicate utt_id and duplicate (dialogue,start) are rejected") {
    const auto dir = test_dir();
    auto records = sample_records();
    records.push_back(records[0]); // exact duplicate id
    const auto dup_id = (dir / "dup_id.jsonl").string();
    write_manifest(dup_id, records);
    CHECK_THROWS(load_manifest(dup_id));

    records = sample_records();
    records.push_back({"other", "other", "x", "en", "d0", Speaker::O1, 0.0, 0.5});
    const auto dup_start = (dir / "dup_start.jsonl").string();
    write_manifest(dup_start, records);
    CHECK_THROWS(load_manifest(dup_start));
}

TEST_CASE("conversation reconstruction sorts by start time within dialogue") {
    auto records = sample_records();
    std::swap(records[0], records[1]); // shuffle
    auto convs = reconstruct_conversations(records);
    REQUIRE(convs.size() == 2);
    const auto & d0 = convs[0].dialogue_id == "d0" ? convs[0] : convs[1];
    REQUIRE(d0.turns.size() == 2);
    CHECK(d0.turns[0].utt_id == "d0_t0");
    CHECK(d0.turns[1].utt_id == "d0_t1");
}

TEST_CASE("synthetic corpus is deterministic and tones match the transcript") {
    SyntheticCorpusSpec spec;
    spec.n_dialogues = 2;
    spec.turns_per_dialogue = 3;
    spec.vocabulary = {"a", "b", "c"};
    spec.seed = 11;
    auto [recs1, store1] = generate_synthetic_corpus(spec);
    auto [recs2, store2] = generate_synthetic_corpus(spec);
    REQUIRE(recs1.size() == 6);
    CHECK(recs1[0].text == recs2[0].text);
    CHECK(store1.waves.at(recs1[0].utt_id) == store2.waves.at(recs1[0].utt_id));

    spec.seed = 12;
    auto [recs3, store3] = generate_synthetic_corpus(spec);
    bool any_diff = false;
    for (size_t i = 0; i < recs1.size(); i++) {
        any_diff = any_diff || recs1[i].text != recs3[i].text;
    }
    CHECK(any_diff);

    // each symbol is a tone at 200 + 100*index Hz: check the dominant one
    const auto & rec = recs1[0];
    const auto & wave = store1.waves.at(rec.utt_id);
    const size_t seg = static_cast<size_t>(kToneSeconds * spec.sample_rate);
    REQUIRE(wave.size() == seg * rec.text.size());
    for (size_t k = 0; k < rec.text.size(); k++) {
        const int idx = rec.text[k] - 'a';
        const double expect_hz = 200.0 + 100.0 * idx;
        const double on = tone_power(wave, k * seg, seg, expect_hz, spec.sample_rate);
        const double off = tone_power(wave, k * seg, seg, expect_hz + 100.0, spec.sample_rate);
        CHECK(on > 100.0 * off);
    }

    // speakers alternate, turns leave 0.1 s gaps
    CHECK(recs1[0].speaker_id == Speaker::O1);
    CHECK(recs1[1].speaker_id == Speaker::O2);
    CHECK(recs1[1].start_time == doctest::Approx(recs1[0].end_time + 0.1));
}

TEST_CASE("empty vocabulary is a configuration error") {
    SyntheticCorpusSpec spec;
    spec.vocabulary = {};
    CHECK_THROWS(generate_synthetic_corpus(spec));
}

TEST_CASE("waveform store round trip is within PCM quantization") {
    WaveformStore store;
    store.sample_rate = 8000;
    store.waves["u1"] = {0.0, 0.5, -0.5, 0.25, -0.99};
    const auto dir = (test_dir() / "store").string();
    save_waveform_store(store, dir);
    auto loaded = load_waveform_store(dir);
    CHECK(loaded.sample_rate == 8000);
    const auto & w = loaded.waves.at("u1");
    REQUIRE(w.size() == 5);
    for (size_t i = 0; i < w.size(); i++) {
        CHECK(std::abs(w[i] - store.waves["u1"][i]) <= 1.0 / 32768.0);
    }
}
