#include "cuecot/evaluation.hpp"

#include "cuecot/error.hpp"
#include "cuecot/text.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>

namespace cuecot::eval {

std::string_view to_string(Decision d) {
    switch (d) {
        case Decision::Win: return "win";
        case Decision::Tie: return "tie";
        case Decision::Lose: return "lose";
    }
    return "tie";
}

Decision parse_decision(std::string_view s) {
    if (s == "win") return Decision::Win;
    if (s == "tie") return Decision::Tie;
    if (s == "lose") return Decision::Lose;
    throw ValidationError("unknown decision '" + std::string(s) + "'");
}

std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::Judged: return "judged";
        case Outcome::Invalid: return "invalid";
        case Outcome::Unparseable: return "unparseable";
    }
    return "judged";
}

namespace {

Outcome parse_outcome(std::string_view s) {
    if (s == "judged") return Outcome::Judged;
    if (s == "invalid") return Outcome::Invalid;
    if (s == "unparseable") return Outcome::Unparseable;
    throw ValidationError("unknown outcome '" + std::string(s) + "'");
}

std::optional<double> parse_real(const std::string& token) {
    if (token.empty()) return std::nullopt;
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(token.c_str(), &end);
    if (errno != 0 || end != token.c_str() + token.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

void to_json(json& j, const JudgmentRecord& r) {
    j = json{{"sample_id", r.sample_id},
             {"metric", to_string(r.metric)},
             {"order", to_string(r.order)},
             {"outcome", to_string(r.outcome)},
             {"score_first", r.score_first},
             {"score_second", r.score_second},
             {"decision", r.decision ? json(to_string(*r.decision)) : json(nullptr)},
             {"judge",
              {{"kind", r.judge.kind == JudgeIdentity::Kind::Machine ? "machine" : "human"},
               {"id", r.judge.id}}},
             {"raw", r.raw},
             {"invalid_side", r.invalid_side},
             {"digest", r.request_digest},
             {"temperature", r.temperature},
             {"top_p", r.top_p}};
}

void from_json(const json& j, JudgmentRecord& r) {
    r.sample_id = j.at("sample_id").get<std::string>();
    r.metric = parse_metric(j.at("metric").get<std::string>());
    r.order = parse_order(j.at("order").get<std::string>());
    r.outcome = parse_outcome(j.value("outcome", std::string("judged")));
    r.score_first = j.value("score_first", 0.0);
    r.score_second = j.value("score_second", 0.0);
    if (auto it = j.find("decision"); it != j.end() && !it->is_null()) {
        r.decision = parse_decision(it->get<std::string>());
    } else {
        r.decision.reset();
    }
    if (auto it = j.find("judge"); it != j.end()) {
        r.judge.kind = it->value("kind", std::string("machine")) == "human"
                           ? JudgeIdentity::Kind::Human
                           : JudgeIdentity::Kind::Machine;
        r.judge.id = it->value("id", std::string{});
    }
    r.raw = j.value("raw", std::string{});
    r.invalid_side = j.value("invalid_side", std::string{});
    r.request_digest = j.value("digest", std::string{});
    r.temperature = j.value("temperature", 0.0);
    r.top_p = j.value("top_p", 0.0);
}

Scores parse_scores(std::string_view judge_output) {
    for (const auto& line : text::split_lines(judge_output)) {
        if (text::is_blank(line)) continue;
        auto tokens = text::split_whitespace(line);
        if (tokens.size() != 2) {
            throw ValidationError("judge score line must hold exactly two numbers: '" + line + "'");
        }
        auto a = parse_real(tokens[0]);
        auto b = parse_real(tokens[1]);
        if (!a || !b) throw ValidationError("judge score line is not numeric: '" + line + "'");
        return {*a, *b};
    }
    throw ValidationError("judge output is empty");
}

Decision decide(double score_s, double score_o) {
    if (score_s > score_o) return Decision::Win;
    if (score_s == score_o) return Decision::Tie;
    return Decision::Lose;
}

std::string_view to_string(DenominatorPolicy p) {
    return p == DenominatorPolicy::ValidOnly ? "valid_only" : "all";
}

void to_json(json& j, const WinRateReport& r) {
    j = json{{"wins", r.wins},
             {"ties", r.ties},
             {"loses", r.loses},
             {"rate", r.rate},
             {"policy", to_string(r.policy)},
             {"n_invalid", r.n_invalid},
             {"n_unparseable", r.n_unparseable}};
}

WinRateReport win_rate(std::span<const JudgmentRecord> records, DenominatorPolicy policy) {
    WinRateReport rep;
    rep.policy = policy;
    auto count = [&](Decision d) {
        switch (d) {
            case Decision::Win: ++rep.wins; break;
            case Decision::Tie: ++rep.ties; break;
            case Decision::Lose: ++rep.loses; break;
        }
    };
    for (const auto& r : records) {
        switch (r.outcome) {
            case Outcome::Unparseable:
                ++rep.n_unparseable;
                break;
            case Outcome::Invalid:
                ++rep.n_invalid;
                if (policy == DenominatorPolicy::All) {
                    if (r.invalid_side == "O") {
                        count(Decision::Win);
                    } else if (r.invalid_side == "both") {
                        count(Decision::Tie);
                    } else {
                        count(Decision::Lose);
                    }
                }
                break;
            case Outcome::Judged:
                if (!r.decision) throw ValidationError("judged record without a decision");
                count(*r.decision);
                break;
        }
    }
    if (rep.judged() == 0) throw ValidationError("no judgments left to compute a win rate");
    rep.rate = static_cast<double>(rep.wins) / static_cast<double>(rep.judged());
    return rep;
}

JudgmentRecord judge_pair(const Dialogue& context, std::string_view response_s,
                          std::string_view response_o, Metric metric, Order order,
                          llm::LlmClient& client, const llm::GenerationParams& params,
                          const prompts::TemplateStore& store) {
    const bool s_first = order == Order::SO;
    auto prompt = prompts::render_judge(store, context, s_first ? response_s : response_o,
                                        s_first ? response_o : response_s, metric);
    JudgmentRecord rec;
    rec.sample_id = context.id;
    rec.metric = metric;
    rec.order = order;
    rec.judge = {JudgeIdentity::Kind::Machine, params.model};
    rec.temperature = params.temperature;
    rec.top_p = params.top_p;
    auto completion = client.complete(prompt, params);
    rec.raw = completion.text;
    rec.request_digest = completion.request_digest;
    try {
        auto scores = parse_scores(completion.text);
        rec.score_first = scores.first;
        rec.score_second = scores.second;
        rec.decision = decide(rec.score_s(), rec.score_o());
        rec.outcome = Outcome::Judged;
    } catch (const ValidationError&) {
        rec.outcome = Outcome::Unparseable;
    }
    return rec;
}

JudgmentRecord invalid_record(std::string sample_id, Metric metric, Order order, bool s_missing,
                              bool o_missing, JudgeIdentity judge) {
    JudgmentRecord rec;
    rec.sample_id = std::move(sample_id);
    rec.metric = metric;
    rec.order = order;
    rec.judge = std::move(judge);
    rec.outcome = Outcome::Invalid;
    rec.invalid_side = s_missing && o_missing ? "both" : (s_missing ? "S" : "O");
    return rec;
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
    std::map<Ngram, std::size_t> out;
    if (tokens.size() < n) return out;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++out[Ngram(tokens.begin() + static_cast<long>(i), tokens.begin() + static_cast<long>(i + n))];
    }
    return out;
}

}  // namespace

double bleu(std::string_view hypothesis, std::string_view reference, int max_order) {
    const auto hyp = text::tokenize(hypothesis);
    const auto ref = text::tokenize(reference);
    if (hyp.empty() || ref.empty() || max_order < 1) return 0.0;
    const auto orders = std::min<std::size_t>(static_cast<std::size_t>(max_order), hyp.size());
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= orders; ++n) {
        auto h = ngram_counts(hyp, n);
        auto r = ngram_counts(ref, n);
        std::size_t total = hyp.size() - n + 1;
        std::size_t matched = 0;
        for (const auto& [gram, count] : h) {
            auto it = r.find(gram);
            if (it != r.end()) matched += std::min(count, it->second);
        }
        double p = matched > 0 ? static_cast<double>(matched) / static_cast<double>(total)
                               : kBleuEpsilon / static_cast<double>(total);
        log_sum += std::log(p);
    }
    const double c = static_cast<double>(hyp.size());
    const double rl = static_cast<double>(ref.size());
    const double bp = c > rl ? 1.0 : std::exp(1.0 - rl / c);
    return bp * std::exp(log_sum / static_cast<double>(orders));
}

double avg_bleu(std::string_view hypothesis, std::string_view reference) {
    double sum = 0.0;
    for (int n = 1; n <= 4; ++n) sum += bleu(hypothesis, reference, n);
    return sum / 4.0;
}

double token_f1(std::string_view hypothesis, std::string_view reference) {
    const auto hyp = text::tokenize(hypothesis);
    const auto ref = text::tokenize(reference);
    if (hyp.empty() || ref.empty()) return 0.0;
    std::map<std::string, std::size_t> ref_counts;
    for (const auto& t : ref) ++ref_counts[t];
    std::size_t overlap = 0;
    for (const auto& t : hyp) {
        auto it = ref_counts.find(t);
        if (it != ref_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double p = static_cast<double>(overlap) / static_cast<double>(hyp.size());
    const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
    return 2.0 * p * r / (p + r);
}

Agreement agreement(std::span<const int> human, std::span<const int> machine) {
    if (human.size() != machine.size()) throw ValidationError("label lists differ in length");
    if (human.empty()) throw ValidationError("agreement needs at least one label pair");
    // 2x2 contingency table, index 0 = +1, 1 = -1.
    double table[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < human.size(); ++i) {
        for (int v : {human[i], machine[i]}) {
            if (v != 1 && v != -1) throw ValidationError("labels must be 1 or -1");
        }
        table[human[i] == 1 ? 0 : 1][machine[i] == 1 ? 0 : 1] += 1.0;
    }
    const double n = static_cast<double>(human.size());
    const double po = (table[0][0] + table[1][1]) / n;
    const double h_pos = (table[0][0] + table[0][1]) / n;
    const double m_pos = (table[0][0] + table[1][0]) / n;
    const double pe = h_pos * m_pos + (1.0 - h_pos) * (1.0 - m_pos);
    Agreement out;
    out.n = human.size();
    out.accuracy = po;
    out.kappa = pe >= 1.0 ? 0.0 : (po - pe) / (1.0 - pe);
    return out;
}

std::optional<int> decision_sign(const JudgmentRecord& r) {
    if (r.outcome != Outcome::Judged || !r.decision) return std::nullopt;
    if (*r.decision == Decision::Win) return 1;
    if (*r.decision == Decision::Lose) return -1;
    return std::nullopt;
}

void to_json(json& j, const HumanLabel& h) {
    j = json{{"sample_id", h.sample_id},
             {"annotator", h.annotator},
             {"metric", to_string(h.metric)},
             {"value", h.value}};
}

void from_json(const json& j, HumanLabel& h) {
    h.sample_id = j.at("sample_id").get<std::string>();
    h.annotator = j.value("annotator", std::string("human"));
    h.metric = parse_metric(j.value("metric", std::string("helpfulness")));
    h.value = j.at("value").get<int>();
}

namespace {

std::map<std::string, const JudgmentRecord*> index_records(std::span<const JudgmentRecord> records) {
    std::map<std::string, const JudgmentRecord*> out;
    for (const auto& r : records) {
        if (!out.emplace(r.sample_id, &r).second) {
            throw ValidationError("duplicate judgment for sample '" + r.sample_id + "'");
        }
    }
    return out;
}

std::string order_label(Order o) { return o == Order::SO ? "S -- O" : "O -- S"; }

std::string cell_text(const AlignmentCell& c) {
    char buf[64];
    if (c.pooled) {
        std::snprintf(buf, sizeof(buf), "%.0f (%.2f)", c.pooled->accuracy * 100.0, c.pooled->kappa);
    } else {
        std::snprintf(buf, sizeof(buf), "- (win %.2f)", c.machine_rate.rate);
    }
    return buf;
}

}  // namespace

AlignmentCell alignment_cell(const std::string& method, const std::string& dataset, Metric metric,
                             Order order, std::span<const JudgmentRecord> records,
                             std::span<const HumanLabel> human) {
    const auto machine = index_records(records);
    AlignmentCell cell;
    cell.method = method;
    cell.dataset = dataset;
    cell.metric = metric;
    cell.order = order;
    cell.machine_rate = win_rate(records, DenominatorPolicy::ValidOnly);

    std::vector<int> pooled_h, pooled_m;
    std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> by_annotator;
    for (const auto& label : human) {
        if (label.metric != metric) continue;
        auto it = machine.find(label.sample_id);
        if (it == machine.end()) {
            throw ValidationError("human label for unknown sample '" + label.sample_id + "'");
        }
        auto sign = decision_sign(*it->second);
        if (!sign) {
            ++cell.n_excluded;
            continue;
        }
        pooled_h.push_back(label.value);
        pooled_m.push_back(*sign);
        by_annotator[label.annotator].first.push_back(label.value);
        by_annotator[label.annotator].second.push_back(*sign);
    }
    if (!pooled_h.empty()) {
        cell.pooled = agreement(pooled_h, pooled_m);
        Agreement mean;
        for (const auto& [who, lists] : by_annotator) {
            auto a = agreement(lists.first, lists.second);
            cell.per_annotator[who] = a;
            mean.accuracy += a.accuracy;
            mean.kappa += a.kappa;
            mean.n += a.n;
        }
        mean.accuracy /= static_cast<double>(by_annotator.size());
        mean.kappa /= static_cast<double>(by_annotator.size());
        cell.annotator_mean = mean;
    }
    return cell;
}

std::vector<AlignmentCell> order_bias_report(std::span<const OrderBiasInput> inputs) {
    std::vector<AlignmentCell> out;
    for (const auto& in : inputs) {
        auto os = index_records(in.records_os);
        auto so = index_records(in.records_so);
        std::set<std::string> os_ids, so_ids;
        for (const auto& [id, _] : os) os_ids.insert(id);
        for (const auto& [id, _] : so) so_ids.insert(id);
        if (os_ids != so_ids) {
            throw ValidationError("OS and SO judgments cover different samples for " + in.method +
                                  "/" + in.dataset);
        }
        out.push_back(alignment_cell(in.method, in.dataset, in.metric, Order::SO, in.records_so, in.human));
        out.push_back(alignment_cell(in.method, in.dataset, in.metric, Order::OS, in.records_os, in.human));
    }
    return out;
}

std::vector<AlignmentCell> order_bias_report(std::span<const JudgmentRecord> records_os,
                                             std::span<const JudgmentRecord> records_so,
                                             std::span<const HumanLabel> human) {
    OrderBiasInput in;
    in.method = "cue";
    in.dataset = "dataset";
    in.metric = records_os.empty() ? Metric::Helpfulness : records_os.front().metric;
    in.records_os.assign(records_os.begin(), records_os.end());
    in.records_so.assign(records_so.begin(), records_so.end());
    in.human.assign(human.begin(), human.end());
    return order_bias_report(std::span<const OrderBiasInput>(&in, 1));
}

std::string format_alignment_table(std::span<const AlignmentCell> cells) {
    std::vector<std::string> datasets;
    std::vector<std::string> methods;
    auto remember = [](std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };
    for (const auto& c : cells) {
        remember(datasets, c.dataset);
        remember(methods, c.method);
    }
    std::ostringstream out;
    out << "metric\tmethod\torder";
    for (const auto& d : datasets) out << '\t' << d;
    out << '\n';
    for (Metric metric : {Metric::Helpfulness, Metric::Acceptability}) {
        for (const auto& method : methods) {
            for (Order order : {Order::SO, Order::OS}) {
                bool any = false;
                std::ostringstream row;
                row << to_string(metric) << '\t' << method << '\t' << order_label(order);
                for (const auto& d : datasets) {
                    auto it = std::find_if(cells.begin(), cells.end(), [&](const AlignmentCell& c) {
                        return c.metric == metric && c.method == method && c.dataset == d &&
                               c.order == order;
                    });
                    row << '\t';
                    if (it != cells.end()) {
                        row << cell_text(*it);
                        any = true;
                    } else {
                        row << '-';
                    }
                }
                if (any) out << row.str() << '\n';
            }
        }
    }
    return out.str();
}

json to_json_summary(std::span<const AlignmentCell> cells) {
    json arr = json::array();
    for (const auto& c : cells) {
        json cell = {{"method", c.method},
                     {"dataset", c.dataset},
                     {"metric", to_string(c.metric)},
                     {"order", to_string(c.order)},
                     {"machine_win_rate", c.machine_rate},
                     {"n_excluded", c.n_excluded}};
        if (c.pooled) {
            cell["pooled"] = {{"accuracy", c.pooled->accuracy}, {"kappa", c.pooled->kappa}, {"n", c.pooled->n}};
        }
        if (c.annotator_mean) {
            cell["annotator_mean"] = {{"accuracy", c.annotator_mean->accuracy},
                                      {"kappa", c.annotator_mean->kappa}};
        }
        json per = json::object();
        for (const auto& [who, a] : c.per_annotator) {
            per[who] = {{"accuracy", a.accuracy}, {"kappa", a.kappa}, {"n", a.n}};
        }
        cell["per_annotator"] = per;
        arr.push_back(cell);
    }
    return arr;
}

}  // namespace cuecot::eval
