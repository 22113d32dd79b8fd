#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cuecot/types.hpp"

namespace cuecot::prompts {

enum class TemplateId {
    Standard,
    OCue,
    MCueStatus,
    MCuePlanning,
    MCueResponseA,
    MCueResponseB,
    MCueResponseC,
    JudgeHelpfulness,
    JudgeAcceptability,
    PersonaInfer,
    DialogueContinue,
};

inline constexpr std::array<TemplateId, 11> kAllTemplates = {
    TemplateId::Standard,         TemplateId::OCue,
    TemplateId::MCueStatus,       TemplateId::MCuePlanning,
    TemplateId::MCueResponseA,    TemplateId::MCueResponseB,
    TemplateId::MCueResponseC,    TemplateId::JudgeHelpfulness,
    TemplateId::JudgeAcceptability, TemplateId::PersonaInfer,
    TemplateId::DialogueContinue,
};

/// Asset file stem, e.g. "m_cue_response_a".
std::string_view to_string(TemplateId id);
TemplateId parse_template_id(std::string_view name);

/// Placeholders a template is allowed to use.
std::span<const std::string_view> declared_placeholders(TemplateId id);

/// Judge template for a metric.
TemplateId judge_template(Metric metric);

/// A template body with `{{name}}` placeholders.
struct PromptTemplate {
    TemplateId id = TemplateId::Standard;
    Language language = Language::En;
    std::string body;

    /// Placeholder names in order of first appearance.
    std::vector<std::string> placeholders() const;

    /// Single-pass substitution. Bound values are inserted verbatim and never
    /// re-scanned. Throws ValidationError naming the first unbound placeholder.
    std::string render(const std::map<std::string, std::string>& bindings) const;
};

struct RenderedPrompt {
    std::string text;
    TemplateId template_id = TemplateId::Standard;
    Language language = Language::En;
    std::map<std::string, std::string> bindings;
    int demo_count = 0;
};

/// Immutable set of templates loaded from `<dir>/<lang>/<template_id>.txt`.
class TemplateStore {
public:
    /// Loads and checks all templates for both languages.
    static TemplateStore load(const std::filesystem::path& dir);

    /// Store rooted at $CUE_TEMPLATE_DIR, or the bundled templates directory.
    static const TemplateStore& bundled();
    static std::filesystem::path bundled_dir();

    const PromptTemplate& get(TemplateId id, Language lang) const;

    /// SHA-256 of the template body.
    std::string digest(TemplateId id, Language lang) const;

    /// "<lang>/<template_id>" -> digest, for run manifests.
    std::map<std::string, std::string> digests() const;

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    std::map<std::pair<TemplateId, Language>, PromptTemplate> templates_;
};

/// "User: ..." / "System: ..." lines in the dialogue's language.
std::string render_dialogue(std::span<const Turn> turns, Language lang);
std::string render_dialogue(const Dialogue& dialogue);

/// Demonstration block for a scheme template; empty when there are no demos.
/// Fields are separated by one blank line, demos by two, and a non-empty block
/// ends with two blank lines before the query.
std::string render_demos(TemplateId id, std::span<const Demonstration> demos, Language lang);

/// Renders one of the seven generation templates. `extras` supplies `status`
/// and `plan` where the template needs them.
RenderedPrompt render_scheme(const TemplateStore& store, TemplateId id, const Dialogue& context,
                             std::span<const Demonstration> demos,
                             const std::map<std::string, std::string>& extras = {});

RenderedPrompt render_planning(const TemplateStore& store, const Dialogue& context,
                               std::string_view status,
                               std::span<const Demonstration> demos = {});

/// `response_first` fills slot A, `response_second` slot B. The judge
/// language defaults to the dialogue language.
RenderedPrompt render_judge(const TemplateStore& store, const Dialogue& context,
                            std::string_view response_first, std::string_view response_second,
                            Metric metric, std::optional<Language> lang = std::nullopt);

RenderedPrompt render_persona_infer(const TemplateStore& store, std::string_view question,
                                    std::string_view answer, Language lang);

RenderedPrompt render_dialogue_continue(const TemplateStore& store, std::string_view question,
                                        std::string_view answer, std::string_view persona,
                                        Language lang);

}  // namespace cuecot::prompts
