#include "slm/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace slm {

EditCounts edit_ops(const std::vector<std::string> & ref, const std::vector<std::string> & hyp) {
    const size_t nr = ref.size();
    const size_t nh = hyp.size();
    std::vector<std::vector<int>> d(nr + 1, std::vector<int>(nh + 1, 0));
    for (size_t i = 0; i <= nr; ++i) {
        d[i][0] = static_cast<int>(i);
    }
    for (size_t j = 0; j <= nh; ++j) {
        d[0][j] = static_cast<int>(j);
    }
    for (size_t i = 1; i <= nr; ++i) {
        for (size_t j = 1; j <= nh; ++j) {
            const int sub = d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1] ? 1 : 0);
            const int ins = d[i][j - 1] + 1;
            const int del = d[i - 1][j] + 1;
            d[i][j] = std::min({sub, ins, del});
        }
    }
    // backtrack, preferring substitution/match, then insertion, then deletion
    EditCounts counts;
    size_t i = nr, j = nh;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 &&
            d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1] ? 1 : 0)) {
            if (ref[i - 1] != hyp[j - 1]) {
                ++counts.substitutions;
            }
            --i;
            --j;
        } else if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
            ++counts.insertions;
            --j;
        } else {
            ++counts.deletions;
            --i;
        }
    }
    return counts;
}

static bool is_edge_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

static std::string strip_token(const std::string & tok) {
    size_t b = 0, e = tok.size();
    while (b < e && is_edge_punct(tok[b])) {
        ++b;
    }
    while (e > b && is_edge_punct(tok[e - 1])) {
        --e;
    }
    return tok.substr(b, e - b);
}

static std::vector<std::string> utf8_chars(const std::string & s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        size_t len = 1;
        if ((c & 0xF8) == 0xF0) {
            len = 4;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2;
        }
        len = std::min(len, s.size() - i);
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

std::vector<std::string> wer_tokens(const std::string & text, const ScoreOptions & opts) {
    std::string t = text;
    if (opts.normalize) {
        for (auto & c : t) {
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    if (opts.tokenization == WerTokenization::character) {
        std::vector<std::string> chars;
        for (auto & ch : utf8_chars(t)) {
            if (ch == " " || ch == "\t" || ch == "\n") {
                continue;
            }
            chars.push_back(ch);
        }
        return chars;
    }
    std::vector<std::string> tokens;
    std::istringstream ss(t);
    std::string tok;
    while (ss >> tok) {
        if (opts.normalize) {
            tok = strip_token(tok);
        }
        if (!tok.empty()) {
            tokens.push_back(tok);
        }
    }
    return tokens;
}

WerReport score(const std::vector<RefEntry> & refs,
                const std::map<std::string, std::string> & hyps,
                const ScoreOptions & opts) {
    WerReport report;
    long long total_errors = 0;
    long long total_tokens = 0;
    for (const auto & ref : refs) {
        std::string hyp_text;
        auto it = hyps.find(ref.utt_id);
        if (it == hyps.end()) {
            std::fprintf(stderr, "warning: no hypothesis for utt '%s', scoring as empty\n",
                         ref.utt_id.c_str());
        } else {
            hyp_text = it->second;
        }
        const auto ref_toks = wer_tokens(ref.text, opts);
        const auto hyp_toks = wer_tokens(hyp_text, opts);
        const EditCounts counts = edit_ops(ref_toks, hyp_toks);
        auto & lang = report.per_language[ref.language];
        lang.n_ref_tokens += static_cast<long long>(ref_toks.size());
        lang.substitutions += counts.substitutions;
        lang.insertions += counts.insertions;
        lang.deletions += counts.deletions;
        total_errors += counts.total();
        total_tokens += static_cast<long long>(ref_toks.size());
        ++report.utterance_count;
    }
    double macro_sum = 0.0;
    for (auto & [lang, sc] : report.per_language) {
        const long long errors = sc.substitutions + sc.insertions + sc.deletions;
        sc.wer = sc.n_ref_tokens > 0 ? static_cast<double>(errors) / sc.n_ref_tokens
                                     : (errors > 0 ? 1.0 : 0.0);
        macro_sum += sc.wer;
    }
    if (!report.per_language.empty()) {
        report.macro_wer = macro_sum / static_cast<double>(report.per_language.size());
    }
    report.micro_wer = total_tokens > 0 ? static_cast<double>(total_errors) / total_tokens : 0.0;
    return report;
}

std::map<std::string, std::string> load_hypotheses(const std::string & path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open hypothesis file: " + path);
    }
    std::map<std::string, std::string> hyps;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error("hypothesis file line " + std::to_string(line_no) +
                                     ": expected 'utt_id\\ttext'");
        }
        const std::string utt = line.substr(0, tab);
        if (!hyps.emplace(utt, line.substr(tab + 1)).second) {
            throw std::runtime_error("duplicate hypothesis for utt '" + utt + "'");
        }
    }
    return hyps;
}

void write_hypotheses(const std::string & path,
                      const std::map<std::string, std::string> & hyps) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write hypothesis file: " + path);
    }
    for (const auto & [utt, text] : hyps) {
        out << utt << "\t" << text << "\n";
    }
}

static std::string pct(double wer) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", wer * 100.0);
    return buf;
}

std::string emit_report(const std::vector<RunMeta> & runs) {
    std::ostringstream out;
    out << "Audio Encoder,LLM,LoRA,Projector,Train data,Eval Set (WER)\n";
    for (const auto & run : runs) {
        out << run.audio_encoder << "," << run.llm << "," << (run.lora ? "yes" : "no") << ","
            << run.projector << "," << run.train_data << "," << pct(run.wer) << "\n";
    }
    return out.str();
}

std::string wer_report_csv(const WerReport & report) {
    std::ostringstream out;
    out << "language,n_ref_tokens,substitutions,insertions,deletions,wer\n";
    for (const auto & [lang, sc] : report.per_language) {
        out << lang << "," << sc.n_ref_tokens << "," << sc.substitutions << ","
            << sc.insertions << "," << sc.deletions << "," << pct(sc.wer) << "\n";
    }
    out << "macro,,,,," << pct(report.macro_wer) << "\n";
    out << "micro,,,,," << pct(report.micro_wer) << "\n";
    return out.str();
}

std::string wer_report_table(const WerReport & report) {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-10s %12s %6s %6s %6s %10s\n",
                  "language", "ref_tokens", "sub", "ins", "del", "wer");
    out << buf;
    for (const auto & [lang, sc] : report.per_language) {
        std::snprintf(buf, sizeof(buf), "%-10s %12lld %6lld %6lld %6lld %10s\n", lang.c_str(),
                      sc.n_ref_tokens, sc.substitutions, sc.insertions, sc.deletions,
                      pct(sc.wer).c_str());
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-10s %12s %6s %6s %6s %10s\n", "macro", "", "", "", "",
                  pct(report.macro_wer).c_str());
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-10s %12s %6s %6s %6s %10s\n", "micro", "", "", "", "",
                  pct(report.micro_wer).c_str());
    out << buf;
    return out.str();
}

} // namespace slm
