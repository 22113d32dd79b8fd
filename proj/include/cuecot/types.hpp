#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace cuecot {

using json = nlohmann::json;

enum class Language { Zh, En };
enum class Role { User, System };

std::string_view to_string(Language lang);
std::string_view to_string(Role role);
Language parse_language(std::string_view s);
Role parse_role(std::string_view s);

struct Turn {
    Role role = Role::User;
    std::string text;
    std::optional<std::string> label;

    bool operator==(const Turn&) const = default;
};

/// Ordered user/system turns plus the optional reference response.
struct Dialogue {
    std::string id;
    std::vector<Turn> turns;
    std::optional<std::string> ground_truth;
    Language language = Language::En;
    std::string source;

    /// Throws ValidationError when an invariant does not hold.
    void validate() const;

    /// True when the last context turn is a user turn, which is what every
    /// generation scheme expects.
    bool ends_with_user() const;

    /// Turn texts joined by a single newline.
    std::string context_text() const;

    bool operator==(const Dialogue&) const = default;
};

/// A (context, status, response) exemplar from a demonstration pool.
struct Demonstration {
    std::string id;
    Dialogue context;
    std::optional<std::string> status;
    std::string response;
    /// Who produced the stored status: "human", "model", or empty when unknown.
    std::string status_source;
};

enum class Metric { Helpfulness, Acceptability };
/// Slot order in the judge template. OS puts the baseline in slot A.
enum class Order { OS, SO };

std::string_view to_string(Metric m);
std::string_view to_string(Order o);
Metric parse_metric(std::string_view s);
Order parse_order(std::string_view s);

void to_json(json& j, const Turn& t);
void from_json(const json& j, Turn& t);
void to_json(json& j, const Dialogue& d);
void from_json(const json& j, Dialogue& d);

}  // namespace cuecot
