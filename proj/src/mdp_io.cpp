#include "evc/mdp_io.hpp"

#include <json.hpp>

namespace evc {

namespace {

using Json = nlohmann::ordered_json;

int require_int(const Json& doc, const char* field) {
    if (!doc.contains(field))
        throw MdpFormatError(MdpFormatError::Kind::MissingField, field,
                             std::string("missing field ") + field);
    const Json& v = doc.at(field);
    if (!v.is_number_integer())
        throw MdpFormatError(MdpFormatError::Kind::BadValue, field,
                             std::string("field ") + field + " must be an integer");
    return v.get<int>();
}

double entry_number(const Json& obj, const char* field, const std::string& where) {
    if (!obj.contains(field))
        throw MdpFormatError(MdpFormatError::Kind::MissingField, where,
                             "missing field " + where + "." + field);
    const Json& v = obj.at(field);
    if (!v.is_number())
        throw MdpFormatError(MdpFormatError::Kind::BadValue, where + "." + field,
                             "field " + where + "." + field + " must be a number");
    return v.get<double>();
}

int entry_index(const Json& obj, const char* field, int bound, const std::string& where) {
    if (!obj.contains(field) || !obj.at(field).is_number_integer())
        throw MdpFormatError(MdpFormatError::Kind::BadValue, where + "." + field,
                             "field " + where + "." + field + " must be an integer");
    int v = obj.at(field).get<int>();
    if (v < 0 || v >= bound)
        throw MdpFormatError(MdpFormatError::Kind::BadValue, where + "." + field,
                             "index " + where + "." + field + "=" + std::to_string(v) + " out of range");
    return v;
}

}  // namespace

std::string serialize_mdp(const TabularMdp& mdp) {
    Json doc;
    doc["num_states"] = mdp.num_states;
    doc["num_actions"] = mdp.num_actions;
    doc["horizon"] = mdp.horizon;

    doc["initial_dist"] = Json::array();
    for (int s = 0; s < mdp.num_states; ++s) doc["initial_dist"].push_back(mdp.initial_dist[s]);

    doc["transitions"] = Json::array();
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a)
            for (int sp = 0; sp < mdp.num_states; ++sp) {
                double p = mdp.transitions[a](s, sp);
                if (p != 0.0) doc["transitions"].push_back({{"s", s}, {"a", a}, {"sp", sp}, {"p", p}});
            }

    doc["event_prob"] = Json::array();
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a) {
            double p = mdp.event_prob(s, a);
            if (p != 0.0) doc["event_prob"].push_back({{"s", s}, {"a", a}, {"p", p}});
        }

    if (!mdp.state_labels.empty() || !mdp.action_labels.empty()) {
        Json labels;
        if (!mdp.state_labels.empty()) labels["states"] = mdp.state_labels;
        if (!mdp.action_labels.empty()) labels["actions"] = mdp.action_labels;
        doc["labels"] = labels;
    }
    return doc.dump(2) + "\n";
}

TabularMdp parse_mdp(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw MdpFormatError(MdpFormatError::Kind::Syntax, "", e.what());
    }
    if (!doc.is_object())
        throw MdpFormatError(MdpFormatError::Kind::Syntax, "", "top-level document must be an object");

    TabularMdp mdp;
    mdp.num_states = require_int(doc, "num_states");
    mdp.num_actions = require_int(doc, "num_actions");
    mdp.horizon = require_int(doc, "horizon");
    if (mdp.num_states <= 0 || mdp.num_actions <= 0 || mdp.horizon <= 0)
        throw MdpFormatError(MdpFormatError::Kind::BadValue, "num_states",
                             "num_states, num_actions and horizon must be positive");

    if (!doc.contains("initial_dist"))
        throw MdpFormatError(MdpFormatError::Kind::MissingField, "initial_dist", "missing field initial_dist");
    const Json& init = doc.at("initial_dist");
    if (!init.is_array() || int(init.size()) != mdp.num_states)
        throw MdpFormatError(MdpFormatError::Kind::BadValue, "initial_dist",
                             "initial_dist must be an array of num_states reals");
    mdp.initial_dist = VectorXd::Zero(mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s) {
        if (!init[s].is_number())
            throw MdpFormatError(MdpFormatError::Kind::BadValue, "initial_dist[" + std::to_string(s) + "]",
                                 "initial_dist entries must be numbers");
        mdp.initial_dist[s] = init[s].get<double>();
    }

    if (!doc.contains("transitions"))
        throw MdpFormatError(MdpFormatError::Kind::MissingField, "transitions", "missing field transitions");
    if (!doc.at("transitions").is_array())
        throw MdpFormatError(MdpFormatError::Kind::BadValue, "transitions", "transitions must be an array");
    mdp.transitions.assign(mdp.num_actions, MatrixXd::Zero(mdp.num_states, mdp.num_states));
    int i = 0;
    for (const Json& tr : doc.at("transitions")) {
        std::string where = "transitions[" + std::to_string(i++) + "]";
        if (!tr.is_object())
            throw MdpFormatError(MdpFormatError::Kind::BadValue, where, where + " must be an object");
        int s = entry_index(tr, "s", mdp.num_states, where);
        int a = entry_index(tr, "a", mdp.num_actions, where);
        int sp = entry_index(tr, "sp", mdp.num_states, where);
        mdp.transitions[a](s, sp) = entry_number(tr, "p", where);
    }

    if (!doc.contains("event_prob"))
        throw MdpFormatError(MdpFormatError::Kind::MissingField, "event_prob", "missing field event_prob");
    if (!doc.at("event_prob").is_array())
        throw MdpFormatError(MdpFormatError::Kind::BadValue, "event_prob", "event_prob must be an array");
    mdp.event_prob = MatrixXd::Zero(mdp.num_states, mdp.num_actions);
    i = 0;
    for (const Json& ev : doc.at("event_prob")) {
        std::string where = "event_prob[" + std::to_string(i++) + "]";
        if (!ev.is_object())
            throw MdpFormatError(MdpFormatError::Kind::BadValue, where, where + " must be an object");
        int s = entry_index(ev, "s", mdp.num_states, where);
        int a = entry_index(ev, "a", mdp.num_actions, where);
        mdp.event_prob(s, a) = entry_number(ev, "p", where);
    }

    if (doc.contains("labels")) {
        const Json& labels = doc.at("labels");
        if (!labels.is_object())
            throw MdpFormatError(MdpFormatError::Kind::BadValue, "labels", "labels must be an object");
        if (labels.contains("states")) mdp.state_labels = labels.at("states").get<std::vector<std::string>>();
        if (labels.contains("actions")) mdp.action_labels = labels.at("actions").get<std::vector<std::string>>();
    }

    auto report = validate(mdp);
    if (!report.empty())
        throw MdpFormatError(MdpFormatError::Kind::Invariant, "", "invariant violation: " + report.front());
    return mdp;
}

bool mdp_equal(const TabularMdp& a, const TabularMdp& b) {
    if (a.num_states != b.num_states || a.num_actions != b.num_actions || a.horizon != b.horizon) return false;
    if (a.initial_dist != b.initial_dist) return false;
    if (a.event_prob != b.event_prob) return false;
    for (int act = 0; act < a.num_actions; ++act)
        if (a.transitions[act] != b.transitions[act]) return false;
    return a.state_labels == b.state_labels && a.action_labels == b.action_labels;
}

}  // namespace evc
