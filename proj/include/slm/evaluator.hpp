#pragma once

#include <map>
#include <string>
#include <vector>

namespace slm {

struct EditCounts {
    long long substitutions = 0;
    long long insertions = 0;
    long long deletions = 0;

    long long total() const { return substitutions + insertions + deletions; }
};

// Minimal-cost alignment with unit costs; ties broken preferring substitution
// over insertion over deletion. total() equals the Levenshtein distance.
EditCounts edit_ops(const std::vector<std::string> & ref, const std::vector<std::string> & hyp);

enum class WerTokenization { whitespace, character };

struct ScoreOptions {
    WerTokenization tokenization = WerTokenization::whitespace;
    bool normalize = true; // lowercase, collapse whitespace, strip edge punctuation
};

struct LangScore {
    long long n_ref_tokens = 0;
    long long substitutions = 0;
    long long insertions = 0;
    long long deletions = 0;
    double wer = 0.0;
};

struct WerReport {
    std::map<std::string, LangScore> per_language;
    double macro_wer = 0.0; // unweighted mean over languages
    double micro_wer = 0.0; // token-weighted, reported for transparency
    int utterance_count = 0;
};

struct RefEntry {
    std::string utt_id;
    std::string language;
    std::string text;
};

// Token list after (optional) normalization; tokenization is UTF-8 aware in
// character mode.
std::vector<std::string> wer_tokens(const std::string & text, const ScoreOptions & opts);

// Missing hypotheses score as empty with a warning. Throws on a duplicate
// hypothesis for one utterance when loading from file.
WerReport score(const std::vector<RefEntry> & refs,
                const std::map<std::string, std::string> & hyps,
                const ScoreOptions & opts = {});

// Hypothesis file: one "utt_id\ttext" per line.
std::map<std::string, std::string> load_hypotheses(const std::string & path);
void write_hypotheses(const std::string & path,
                      const std::map<std::string, std::string> & hyps);

struct RunMeta {
    std::string audio_encoder;
    std::string llm;
    bool lora = false;
    std::string projector;
    std::string train_data;
    double wer = 0.0;
};

// Leaderboard-style table, one row per run, WER as a percentage with two
// decimals. Returns CSV text; stable column order.
std::string emit_report(const std::vector<RunMeta> & runs);

// Per-language breakdown of one report: CSV plus an aligned text table.
std::string wer_report_csv(const WerReport & report);
std::string wer_report_table(const WerReport & report);

} // namespace slm
