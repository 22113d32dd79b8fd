#include "cuecot/types.hpp"

#include "cuecot/error.hpp"
#include "cuecot/text.hpp"

#include <unordered_set>

namespace cuecot {

std::string_view to_string(Language lang) { return lang == Language::Zh ? "zh" : "en"; }
std::string_view to_string(Role role) { return role == Role::User ? "user" : "system"; }

Language parse_language(std::string_view s) {
    if (s == "zh") return Language::Zh;
    if (s == "en") return Language::En;
    throw ValidationError("unknown language '" + std::string(s) + "'");
}

Role parse_role(std::string_view s) {
    if (s == "user") return Role::User;
    if (s == "system") return Role::System;
    throw ValidationError("unknown role '" + std::string(s) + "'");
}

std::string_view to_string(Metric m) {
    return m == Metric::Helpfulness ? "helpfulness" : "acceptability";
}

std::string_view to_string(Order o) { return o == Order::OS ? "OS" : "SO"; }

Metric parse_metric(std::string_view s) {
    if (s == "helpfulness") return Metric::Helpfulness;
    if (s == "acceptability") return Metric::Acceptability;
    throw ValidationError("unknown metric '" + std::string(s) + "'");
}

Order parse_order(std::string_view s) {
    if (s == "OS" || s == "O-S") return Order::OS;
    if (s == "SO" || s == "S-O") return Order::SO;
    throw ValidationError("unknown order '" + std::string(s) + "'");
}

void Dialogue::validate() const {
    if (id.empty()) throw ValidationError("dialogue id is empty");
    if (turns.empty()) throw ValidationError("dialogue '" + id + "' has no turns");
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (text::is_blank(turns[i].text)) {
            throw ValidationError("dialogue '" + id + "' turn " + std::to_string(i) + " is empty");
        }
    }
}

bool Dialogue::ends_with_user() const {
    return !turns.empty() && turns.back().role == Role::User;
}

std::string Dialogue::context_text() const {
    std::string out;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (i) out += '\n';
        out += turns[i].text;
    }
    return out;
}

void to_json(json& j, const Turn& t) {
    j = json{{"role", to_string(t.role)}, {"text", t.text}};
    if (t.label) j["label"] = *t.label;
}

void from_json(const json& j, Turn& t) {
    t.role = parse_role(j.at("role").get<std::string>());
    t.text = j.at("text").get<std::string>();
    if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
        t.label = it->get<std::string>();
    } else {
        t.label.reset();
    }
}

void to_json(json& j, const Dialogue& d) {
    j = json{{"id", d.id},
             {"language", to_string(d.language)},
             {"source", d.source},
             {"turns", d.turns}};
    if (d.ground_truth) j["ground_truth"] = *d.ground_truth;
}

void from_json(const json& j, Dialogue& d) {
    d.id = j.at("id").get<std::string>();
    d.language = parse_language(j.at("language").get<std::string>());
    d.source = j.value("source", std::string{});
    d.turns = j.at("turns").get<std::vector<Turn>>();
    if (auto it = j.find("ground_truth"); it != j.end() && !it->is_null()) {
        d.ground_truth = it->get<std::string>();
    } else {
        d.ground_truth.reset();
    }
}

}  // namespace cuecot
