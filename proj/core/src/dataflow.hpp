#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pocgen/php_model.hpp"

namespace pocgen::context::detail {

/// Statement identity across the model: unit index + statement index.
struct Gid {
  int unit = -1;
  int stmt = -1;
  auto operator<=>(const Gid&) const = default;
};

/// Reaching definitions. A request to every unit is analysed as its own
/// entry (includes merged textually); function bodies are analysed once with
/// parameters defined by the declaration statement.
class DefUse {
 public:
  explicit DefUse(const php::ProgramModel& model);

  /// Definitions of `var` reaching statement `use`, over all entries.
  const std::set<Gid>& defs(Gid use, const std::string& var) const;
  /// Same, for a request to unit `entry` (function bodies are context-free).
  const std::set<Gid>& defs_in(int entry, Gid use, const std::string& var) const;
  /// Statements reading the value of `var` defined at `def`.
  const std::vector<Gid>& uses(Gid def, const std::string& var) const;

 private:
  using Facts = std::map<std::pair<Gid, std::string>, std::set<Gid>>;
  const php::ProgramModel& model_;
  std::vector<Facts> by_entry_;
  Facts functions_;
  Facts all_;
  std::map<std::pair<Gid, std::string>, std::vector<Gid>> uses_;

  void link_globals();
};

/// One condition on the way to a statement.
struct Cond {
  const php::Expr* expr = nullptr;  // nullptr with a switch case
  bool positive = true;
  /// switch: subject == case_value (or, for default, != every other case).
  const php::Expr* subject = nullptr;
  const php::Expr* case_value = nullptr;
  std::vector<const php::Expr*> other_cases;
  /// Constant outcome, for unconditional exits.
  std::optional<bool> constant;
};

struct GuardInfo {
  Gid stmt;  // the If/Loop/Switch statement (or the exit statement)
  std::vector<Cond> conds;
  std::string effect;  // "enclosing" or "early-exit"
};

/// Guards dominating statement `stmt` of unit `unit`, outermost first. Stops at
/// the enclosing function declaration.
std::vector<GuardInfo> guards_for(const php::ProgramModel& model, int unit, int stmt);

/// Top-level early exits of a unit (no target statement).
std::vector<GuardInfo> top_level_exits(const php::ProgramModel& model, int unit);

/// True when every path through the block ends in exit/die/return.
bool block_terminates(const php::Block& block);

/// Condition text with the required polarity.
std::string cond_text(const php::ProgramModel& model, int unit, const Cond& c);

// --- predicates over request parameters -------------------------------------

struct Atom {
  enum class Op { Set, Unset, Eq, Neq, NonEmpty, Empty };
  std::string superglobal;
  std::string key;
  Op op = Op::Set;
  std::string value;
  /// Index of the guard the atom came from.
  int guard = -1;
};

using Conj = std::vector<Atom>;

/// Disjunctive normal form; no terms means false, one empty term means true.
struct Dnf {
  std::vector<Conj> terms;
  static Dnf truth(bool v);
};

Dnf dnf_and(const Dnf& a, const Dnf& b);
Dnf dnf_or(const Dnf& a, const Dnf& b);

struct Requirement {
  std::string superglobal;
  std::string key;
  std::string op;  // "==", "!=", "non-empty", "isset"
  std::string value;
  int guard = -1;
};

/// Requirements of a satisfiable conjunction, nullopt when contradictory.
std::optional<std::vector<Requirement>> solve(const Conj& conj);

/// Satisfiable term with the fewest required parameters.
std::optional<std::vector<Requirement>> best_solution(const Dnf& dnf);

/// Converts guard conditions to predicates over request parameters, resolving
/// local variables through reaching definitions in the context of `entry`.
class Evaluator {
 public:
  Evaluator(const php::ProgramModel& model, const DefUse& du);

  /// Conditions of `guard` as a formula; `index` tags the atoms. Predicates
  /// that cannot be expressed over request parameters make the formula false
  /// and are reported through `unknown`.
  Dnf guard_formula(int entry, const GuardInfo& guard, int index, std::vector<std::string>& unknown) const;

 private:
  struct Term;
  using TermPtr = std::shared_ptr<const Term>;
  struct Env {
    int entry;
    Gid at;
    int depth;
  };

  const php::ProgramModel& model_;
  const DefUse& du_;

  TermPtr term(const php::Expr& e, const Env& env) const;
  TermPtr variable(const std::string& name, const Env& env) const;
  Dnf formula(const php::Expr& e, bool positive, const Env& env, int index, std::vector<std::string>& unknown) const;
  Dnf truthy(const TermPtr& t, bool positive, const Env& env, int index, std::vector<std::string>& unknown) const;
  Dnf equals(const TermPtr& a, const TermPtr& b, bool positive, const Env& env, int index,
             std::vector<std::string>& unknown) const;
  Dnf is_set(const TermPtr& t, bool positive, int index) const;
  Dnf is_empty(const TermPtr& t, bool positive, const Env& env, int index, std::vector<std::string>& unknown) const;
  std::string text_of(const php::Expr& e, const Env& env) const;
};

}  // namespace pocgen::context::detail
