#pragma once

#include "evc/mdp.hpp"

#include <string>

namespace evc {

/// Error raised by parse_mdp. The kind distinguishes malformed syntax,
/// missing or mistyped fields, and invariant violations; `where` names the
/// offending field or index path when known.
class MdpFormatError : public std::runtime_error {
  public:
    enum class Kind { Syntax, MissingField, BadValue, Invariant };

    MdpFormatError(Kind kind, std::string where, const std::string& message)
        : std::runtime_error(message), kind_(kind), where_(std::move(where)) {}

    Kind kind() const { return kind_; }
    const std::string& where() const { return where_; }

  private:
    Kind kind_;
    std::string where_;
};

/// Document schema (JSON, keys emitted in exactly this order):
///   num_states, num_actions, horizon, initial_dist,
///   transitions: [{s, a, sp, p}] (omitted triples are zero),
///   event_prob:  [{s, a, p}]     (omitted pairs are zero),
///   labels (optional): {states: [...], actions: [...]}
/// parse(serialize(m)) == m exactly; doubles round-trip bit-for-bit.
std::string serialize_mdp(const TabularMdp& mdp);
TabularMdp parse_mdp(const std::string& text);

bool mdp_equal(const TabularMdp& a, const TabularMdp& b);

}  // namespace evc
