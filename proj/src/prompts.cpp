#include "cuecot/prompts.hpp"

#include "cuecot/error.hpp"
#include "cuecot/text.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cuecot::prompts {

namespace {

struct TemplateInfo {
    TemplateId id;
    std::string_view name;
    std::vector<std::string_view> placeholders;
};

const std::vector<TemplateInfo>& template_table() {
    static const std::vector<TemplateInfo> table = {
        {TemplateId::Standard, "standard", {"demos", "dialogue"}},
        {TemplateId::OCue, "o_cue", {"demos", "dialogue"}},
        {TemplateId::MCueStatus, "m_cue_status", {"demos", "dialogue"}},
        {TemplateId::MCuePlanning, "m_cue_planning", {"demos", "dialogue", "status"}},
        {TemplateId::MCueResponseA, "m_cue_response_a", {"demos", "dialogue", "status"}},
        {TemplateId::MCueResponseB, "m_cue_response_b", {"demos", "dialogue", "plan"}},
        {TemplateId::MCueResponseC, "m_cue_response_c", {"demos", "dialogue", "status", "plan"}},
        {TemplateId::JudgeHelpfulness, "judge_helpfulness", {"dialogue", "response_a", "response_b"}},
        {TemplateId::JudgeAcceptability, "judge_acceptability", {"dialogue", "response_a", "response_b"}},
        {TemplateId::PersonaInfer, "persona_infer", {"question", "answer"}},
        {TemplateId::DialogueContinue, "dialogue_continue", {"personality_seed", "question", "answer"}},
    };
    return table;
}

const TemplateInfo& info(TemplateId id) {
    for (const auto& t : template_table()) {
        if (t.id == id) return t;
    }
    throw ValidationError("unknown template id");
}

// Demo fields shown for each scheme step.
struct DemoFields {
    bool status = false;
    bool response = false;
};

std::optional<DemoFields> demo_fields(TemplateId id) {
    switch (id) {
        case TemplateId::Standard: return DemoFields{false, true};
        case TemplateId::OCue: return DemoFields{true, true};
        case TemplateId::MCueStatus: return DemoFields{true, false};
        case TemplateId::MCuePlanning: return DemoFields{true, false};
        case TemplateId::MCueResponseA:
        case TemplateId::MCueResponseB:
        case TemplateId::MCueResponseC: return DemoFields{true, true};
        default: return std::nullopt;
    }
}

struct Labels {
    std::string_view dialogue;
    std::string_view status;
    std::string_view response;
    std::string_view user;
    std::string_view system;
};

const Labels& labels(Language lang) {
    static const Labels en{"Dialogue:", "User status:", "Response:", "User: ", "System: "};
    static const Labels zh{"对话：", "用户状态：", "回复：", "用户:", "系统:"};
    return lang == Language::Zh ? zh : en;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot read template " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string required_text(std::string_view value, std::string_view what) {
    std::string t = text::trim(value);
    if (t.empty()) throw ValidationError(std::string(what) + " is empty");
    return t;
}

}  // namespace

std::string_view to_string(TemplateId id) { return info(id).name; }

TemplateId parse_template_id(std::string_view name) {
    for (const auto& t : template_table()) {
        if (t.name == name) return t.id;
    }
    throw ValidationError("unknown template '" + std::string(name) + "'");
}

std::span<const std::string_view> declared_placeholders(TemplateId id) {
    const auto& v = info(id).placeholders;
    return {v.data(), v.size()};
}

TemplateId judge_template(Metric metric) {
    return metric == Metric::Helpfulness ? TemplateId::JudgeHelpfulness
                                         : TemplateId::JudgeAcceptability;
}

std::vector<std::string> PromptTemplate::placeholders() const {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = body.find("{{", pos)) != std::string::npos) {
        auto end = body.find("}}", pos + 2);
        if (end == std::string::npos) break;
        std::string name = body.substr(pos + 2, end - pos - 2);
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
        pos = end + 2;
    }
    return out;
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& bindings) const {
    std::string out;
    out.reserve(body.size() + 256);
    std::size_t pos = 0;
    while (true) {
        auto open = body.find("{{", pos);
        if (open == std::string::npos) {
            out.append(body, pos, std::string::npos);
            break;
        }
        auto close = body.find("}}", open + 2);
        if (close == std::string::npos) {
            out.append(body, pos, std::string::npos);
            break;
        }
        out.append(body, pos, open - pos);
        std::string name = body.substr(open + 2, close - open - 2);
        auto it = bindings.find(name);
        if (it == bindings.end()) {
            throw ValidationError("template " + std::string(to_string(id)) +
                                  " is missing a value for placeholder '" + name + "'");
        }
        out += it->second;
        pos = close + 2;
    }
    return out;
}

TemplateStore TemplateStore::load(const std::filesystem::path& dir) {
    TemplateStore store;
    store.root_ = dir;
    for (Language lang : {Language::En, Language::Zh}) {
        for (TemplateId id : kAllTemplates) {
            auto path = dir / std::string(to_string(lang)) / (std::string(to_string(id)) + ".txt");
            PromptTemplate t{id, lang, read_file(path)};
            auto declared = declared_placeholders(id);
            for (const auto& name : t.placeholders()) {
                if (std::find(declared.begin(), declared.end(), name) == declared.end()) {
                    throw ValidationError("template " + path.string() +
                                          " uses undeclared placeholder '" + name + "'");
                }
            }
            store.templates_.emplace(std::make_pair(id, lang), std::move(t));
        }
    }
    return store;
}

std::filesystem::path TemplateStore::bundled_dir() {
    if (const char* env = std::getenv("CUE_TEMPLATE_DIR"); env && *env) return env;
    return CUECOT_TEMPLATE_DIR;
}

const TemplateStore& TemplateStore::bundled() {
    static const TemplateStore store = load(bundled_dir());
    return store;
}

const PromptTemplate& TemplateStore::get(TemplateId id, Language lang) const {
    auto it = templates_.find({id, lang});
    if (it == templates_.end()) throw ValidationError("template not loaded");
    return it->second;
}

std::string TemplateStore::digest(TemplateId id, Language lang) const {
    return text::sha256_hex(get(id, lang).body);
}

std::map<std::string, std::string> TemplateStore::digests() const {
    std::map<std::string, std::string> out;
    for (const auto& [key, t] : templates_) {
        out[std::string(to_string(key.second)) + "/" + std::string(to_string(key.first))] =
            text::sha256_hex(t.body);
    }
    return out;
}

std::string render_dialogue(std::span<const Turn> turns, Language lang) {
    const auto& l = labels(lang);
    std::string out;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (i) out += '\n';
        out += turns[i].role == Role::User ? l.user : l.system;
        out += text::trim(turns[i].text);
    }
    return out;
}

std::string render_dialogue(const Dialogue& dialogue) {
    return render_dialogue(dialogue.turns, dialogue.language);
}

std::string render_demos(TemplateId id, std::span<const Demonstration> demos, Language lang) {
    if (demos.empty()) return {};
    auto fields = demo_fields(id);
    if (!fields) {
        throw ValidationError("template " + std::string(to_string(id)) +
                              " does not take demonstrations");
    }
    const auto& l = labels(lang);
    std::string out;
    for (std::size_t i = 0; i < demos.size(); ++i) {
        const auto& d = demos[i];
        if (i) out += "\n\n\n";
        out += l.dialogue;
        out += '\n';
        out += render_dialogue(d.context.turns, lang);
        if (fields->status) {
            if (!d.status || text::is_blank(*d.status)) {
                throw ValidationError("demonstration '" + d.id + "' has no status");
            }
            out += "\n\n";
            out += l.status;
            out += '\n';
            out += text::trim(*d.status);
        }
        if (fields->response) {
            out += "\n\n";
            out += l.response;
            out += '\n';
            out += text::trim(d.response);
        }
    }
    out += "\n\n\n";
    return out;
}

RenderedPrompt render_scheme(const TemplateStore& store, TemplateId id, const Dialogue& context,
                             std::span<const Demonstration> demos,
                             const std::map<std::string, std::string>& extras) {
    if (!demo_fields(id)) {
        throw ValidationError("template " + std::string(to_string(id)) +
                              " is not a generation scheme template");
    }
    RenderedPrompt out;
    out.template_id = id;
    out.language = context.language;
    out.demo_count = static_cast<int>(demos.size());
    out.bindings["dialogue"] = render_dialogue(context);
    out.bindings["demos"] = render_demos(id, demos, context.language);
    for (std::string_view name : declared_placeholders(id)) {
        if (name == "dialogue" || name == "demos") continue;
        auto it = extras.find(std::string(name));
        if (it == extras.end()) {
            throw ValidationError("template " + std::string(to_string(id)) +
                                  " requires '" + std::string(name) + "'");
        }
        out.bindings[std::string(name)] = required_text(it->second, name);
    }
    out.text = store.get(id, context.language).render(out.bindings);
    return out;
}

RenderedPrompt render_planning(const TemplateStore& store, const Dialogue& context,
                               std::string_view status, std::span<const Demonstration> demos) {
    return render_scheme(store, TemplateId::MCuePlanning, context, demos,
                         {{"status", required_text(status, "status")}});
}

RenderedPrompt render_judge(const TemplateStore& store, const Dialogue& context,
                            std::string_view response_first, std::string_view response_second,
                            Metric metric, std::optional<Language> lang) {
    RenderedPrompt out;
    out.template_id = judge_template(metric);
    out.language = lang.value_or(context.language);
    out.bindings["dialogue"] = render_dialogue(context.turns, out.language);
    out.bindings["response_a"] = required_text(response_first, "response A");
    out.bindings["response_b"] = required_text(response_second, "response B");
    out.text = store.get(out.template_id, out.language).render(out.bindings);
    return out;
}

RenderedPrompt render_persona_infer(const TemplateStore& store, std::string_view question,
                                    std::string_view answer, Language lang) {
    RenderedPrompt out;
    out.template_id = TemplateId::PersonaInfer;
    out.language = lang;
    out.bindings["question"] = required_text(question, "question");
    out.bindings["answer"] = required_text(answer, "answer");
    out.text = store.get(out.template_id, lang).render(out.bindings);
    return out;
}

RenderedPrompt render_dialogue_continue(const TemplateStore& store, std::string_view question,
                                        std::string_view answer, std::string_view persona,
                                        Language lang) {
    RenderedPrompt out;
    out.template_id = TemplateId::DialogueContinue;
    out.language = lang;
    // The template ends the sentence itself.
    std::string seed = required_text(persona, "personality seed");
    for (std::string_view stop : {".", "\xE3\x80\x82"}) {
        if (seed.size() > stop.size() && seed.ends_with(stop)) {
            seed.resize(seed.size() - stop.size());
            break;
        }
    }
    out.bindings["personality_seed"] = seed;
    out.bindings["question"] = required_text(question, "question");
    out.bindings["answer"] = required_text(answer, "answer");
    out.text = store.get(out.template_id, lang).render(out.bindings);
    return out;
}

}  // namespace cuecot::prompts
