#include "cuecot/corpus.hpp"

#include "cuecot/error.hpp"
#include "cuecot/random.hpp"
#include "cuecot/text.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace cuecot::corpus {

std::string_view to_string(LengthUnit unit) {
    switch (unit) {
        case LengthUnit::Chars: return "chars";
        case LengthUnit::Tokens: return "tokens";
        case LengthUnit::Mixed: return "mixed";
    }
    return "mixed";
}

void to_json(json& j, const DatasetStats& s) {
    j = json{{"avg_context_len", s.avg_context_len},
             {"avg_response_len", s.avg_response_len},
             {"samples", s.samples},
             {"unit", to_string(s.unit)},
             {"with_response", s.with_response}};
}

std::vector<Dialogue> parse_dataset(std::istream& in, std::string_view descriptor) {
    std::vector<Dialogue> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::is_blank(line)) continue;
        Dialogue d;
        try {
            d = json::parse(line).get<Dialogue>();
            if (d.source.empty()) d.source = std::string(descriptor);
            d.validate();
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed record: ") + e.what(), line_no);
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), line_no);
        }
        if (!seen.insert(d.id).second) {
            throw ParseError("duplicate dialogue id '" + d.id + "'", line_no);
        }
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<Dialogue> load_dataset(const std::filesystem::path& path, std::string_view descriptor) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open dataset " + path.string());
    return parse_dataset(in, descriptor);
}

std::string serialize_dataset(std::span<const Dialogue> dialogues) {
    std::string out;
    for (const auto& d : dialogues) {
        out += json(d).dump();
        out += '\n';
    }
    return out;
}

void save_dataset(const std::filesystem::path& path, std::span<const Dialogue> dialogues) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << serialize_dataset(dialogues);
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return text::sha256_hex(ss.str());
}

std::size_t text_length(std::string_view s, Language lang) {
    return lang == Language::Zh ? text::scalar_count(s) : text::split_whitespace(s).size();
}

DatasetStats compute_stats(std::span<const Dialogue> dialogues) {
    if (dialogues.empty()) throw ValidationError("cannot compute statistics of an empty dataset");
    DatasetStats stats;
    stats.samples = dialogues.size();
    bool any_zh = false;
    bool any_en = false;
    // Integer sums keep the result independent of input order.
    std::uint64_t context_total = 0;
    std::uint64_t response_total = 0;
    for (const auto& d : dialogues) {
        (d.language == Language::Zh ? any_zh : any_en) = true;
        for (const auto& t : d.turns) context_total += text_length(t.text, d.language);
        if (d.ground_truth) {
            response_total += text_length(*d.ground_truth, d.language);
            ++stats.with_response;
        }
    }
    stats.unit = any_zh && any_en ? LengthUnit::Mixed : (any_zh ? LengthUnit::Chars : LengthUnit::Tokens);
    stats.avg_context_len = static_cast<double>(context_total) / static_cast<double>(stats.samples);
    stats.avg_response_len =
        stats.with_response == 0
            ? 0.0
            : static_cast<double>(response_total) / static_cast<double>(stats.with_response);
    return stats;
}

D4Sample extract_d4_ground_truth(const Dialogue& dialogue) {
    std::optional<std::size_t> best;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
        const auto& t = dialogue.turns[i];
        if (t.role != Role::System || !t.label || *t.label != kEmpathicComfort) continue;
        auto len = text_length(t.text, dialogue.language);
        if (!best || len > best_len) {
            best = i;
            best_len = len;
        }
    }
    if (!best) {
        throw ValidationError("dialogue '" + dialogue.id +
                              "' has no system turn labeled 'empathic comfort'; skip it");
    }
    D4Sample out;
    out.response_index = *best;
    out.response = dialogue.turns[*best].text;
    out.context.assign(dialogue.turns.begin(), dialogue.turns.begin() + static_cast<long>(*best));
    return out;
}

Dialogue to_d4_benchmark(const Dialogue& dialogue) {
    auto sample = extract_d4_ground_truth(dialogue);
    if (sample.context.empty()) {
        throw ValidationError("dialogue '" + dialogue.id + "' has no context before its response");
    }
    Dialogue out = dialogue;
    out.turns = std::move(sample.context);
    out.ground_truth = std::move(sample.response);
    return out;
}

Dialogue make_psyqa_dialogue(std::string id, std::string_view description, std::string_view question,
                             std::string_view answer) {
    Dialogue d;
    d.id = std::move(id);
    d.language = Language::Zh;
    d.source = "PsyQA";
    if (!text::is_blank(description)) d.turns.push_back({Role::User, text::trim(description), {}});
    d.turns.push_back({Role::User, text::trim(question), {}});
    d.ground_truth = text::trim(answer);
    d.validate();
    return d;
}

std::vector<Dialogue> sample_per_group(std::span<const Dialogue> dialogues, std::size_t per_group,
                                       std::uint64_t seed,
                                       const std::function<std::string(const Dialogue&)>& group_of) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < dialogues.size(); ++i) groups[group_of(dialogues[i])].push_back(i);
    std::vector<std::size_t> chosen;
    for (auto& [name, idx] : groups) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            auto len = [&](std::size_t k) {
                const auto& d = dialogues[k];
                return d.ground_truth ? text_length(*d.ground_truth, d.language) : 0;
            };
            return len(a) < len(b);
        });
        Rng rng(derive_seed(seed, name));
        rng.shuffle(idx.begin(), idx.end());
        idx.resize(std::min(per_group, idx.size()));
        chosen.insert(chosen.end(), idx.begin(), idx.end());
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<Dialogue> out;
    out.reserve(chosen.size());
    for (auto i : chosen) out.push_back(dialogues[i]);
    return out;
}

std::vector<SeedQA> load_seeds(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open seeds " + path.string());
    std::vector<SeedQA> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::is_blank(line)) continue;
        try {
            auto j = json::parse(line);
            SeedQA s;
            s.id = j.at("id").get<std::string>();
            s.language = parse_language(j.at("language").get<std::string>());
            s.question = j.at("question").get<std::string>();
            s.answer = j.at("answer").get<std::string>();
            s.source = j.value("source", std::string{});
            if (text::is_blank(s.question) || text::is_blank(s.answer)) {
                throw ValidationError("seed '" + s.id + "' has an empty question or answer");
            }
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed seed: ") + e.what(), line_no);
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

PersonaSeed infer_persona(const SeedQA& seed, llm::LlmClient& client,
                          const llm::GenerationParams& params, const prompts::TemplateStore& store) {
    if (text::is_blank(seed.question) || text::is_blank(seed.answer)) {
        throw ValidationError("seed question and answer must be non-empty");
    }
    auto prompt = prompts::render_persona_infer(store, seed.question, seed.answer, seed.language);
    auto completion = client.complete(prompt, params);
    PersonaSeed persona;
    persona.text = text::trim(completion.text);
    if (persona.text.empty()) throw BackendError("persona inference returned nothing", false);
    return persona;
}

std::vector<Turn> parse_transcript(std::string_view completion) {
    static constexpr std::string_view kHuman = "[Human]";
    static constexpr std::string_view kAi = "[AI]";
    struct Marker {
        std::size_t pos;
        Role role;
        std::size_t len;
    };
    std::vector<Marker> markers;
    for (std::size_t pos = 0; pos < completion.size();) {
        auto h = completion.find(kHuman, pos);
        auto a = completion.find(kAi, pos);
        if (h == std::string_view::npos && a == std::string_view::npos) break;
        if (h < a) {
            markers.push_back({h, Role::User, kHuman.size()});
            pos = h + kHuman.size();
        } else {
            markers.push_back({a, Role::System, kAi.size()});
            pos = a + kAi.size();
        }
    }
    if (markers.empty()) {
        throw ValidationError("completion has no [Human]/[AI] markers: " + std::string(completion));
    }
    std::vector<Turn> turns;
    Role expected = Role::User;
    for (std::size_t i = 0; i < markers.size(); ++i) {
        const auto begin = markers[i].pos + markers[i].len;
        const auto end = i + 1 < markers.size() ? markers[i + 1].pos : completion.size();
        std::string body = text::trim(completion.substr(begin, end - begin));
        if (markers[i].role != expected || body.empty()) break;
        turns.push_back({markers[i].role, std::move(body), {}});
        expected = expected == Role::User ? Role::System : Role::User;
    }
    if (turns.empty()) {
        throw ValidationError("completion does not continue with a [Human] turn: " +
                              std::string(completion));
    }
    return turns;
}

Dialogue continue_dialogue(const SeedQA& seed, const PersonaSeed& persona, llm::LlmClient& client,
                           const llm::GenerationParams& params, const prompts::TemplateStore& store) {
    if (text::is_blank(persona.text)) throw ValidationError("persona text is empty");
    auto prompt = prompts::render_dialogue_continue(store, seed.question, seed.answer, persona.text,
                                                    seed.language);
    auto completion = client.complete(prompt, params);
    Dialogue d;
    d.id = seed.id;
    d.language = seed.language;
    d.source = seed.source.empty() ? "constructed" : seed.source;
    d.turns.push_back({Role::User, text::trim(seed.question), {}});
    d.turns.push_back({Role::System, text::trim(seed.answer), {}});
    for (auto& t : parse_transcript(completion.text)) d.turns.push_back(std::move(t));
    d.validate();
    return d;
}

Dialogue split_last_response(Dialogue dialogue) {
    if (dialogue.turns.size() >= 2 && dialogue.turns.back().role == Role::System) {
        dialogue.ground_truth = dialogue.turns.back().text;
        dialogue.turns.pop_back();
    }
    return dialogue;
}

}  // namespace cuecot::corpus
