#pragma once

#include <algorithm>
#include <cctype>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "morap/common.hpp"

#include "json.hpp"

namespace morap {

using Json = nlohmann::json;

// Reachability fragment of LTL in negation normal form. Negation only sits on
// atoms; the parser pushes it down and rejects anything whose sink-free
// fragment membership would be lost (always-operators, negated until/finally).
enum class FKind : uint8_t { True, False, Atom, NotAtom, And, Or, Next, Until, Eventually };

struct Formula {
  FKind kind = FKind::True;
  std::string atom;            // Atom / NotAtom payload
  std::vector<Formula> kids;   // And/Or >= 2 canonically sorted; Next/Eventually 1; Until 2
};

inline int cmpFormula(const Formula& a, const Formula& b) {
  if (a.kind != b.kind) return a.kind < b.kind ? -1 : 1;
  if (int c = a.atom.compare(b.atom)) return c < 0 ? -1 : 1;
  const size_t n = std::min(a.kids.size(), b.kids.size());
  for (size_t k = 0; k < n; ++k)
    if (int c = cmpFormula(a.kids[k], b.kids[k])) return c;
  if (a.kids.size() != b.kids.size()) return a.kids.size() < b.kids.size() ? -1 : 1;
  return 0;
}

inline bool operator==(const Formula& a, const Formula& b) { return cmpFormula(a, b) == 0; }
inline bool operator<(const Formula& a, const Formula& b) { return cmpFormula(a, b) < 0; }

inline Formula fTrue() { return {FKind::True, {}, {}}; }
inline Formula fFalse() { return {FKind::False, {}, {}}; }
inline Formula fAtom(std::string name) { return {FKind::Atom, std::move(name), {}}; }
inline Formula fNotAtom(std::string name) { return {FKind::NotAtom, std::move(name), {}}; }

// Canonical n-ary conjunction: flattens nested Ands, drops true, absorbs
// false, sorts and deduplicates operands.
inline Formula fAnd(std::vector<Formula> kids) {
  std::vector<Formula> flat;
  for (auto& k : kids) {
    if (k.kind == FKind::And)
      for (auto& g : k.kids) flat.push_back(std::move(g));
    else
      flat.push_back(std::move(k));
  }
  std::vector<Formula> out;
  for (auto& k : flat) {
    if (k.kind == FKind::False) return fFalse();
    if (k.kind == FKind::True) continue;
    out.push_back(std::move(k));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(), [](const Formula& a, const Formula& b) { return a == b; }),
            out.end());
  if (out.empty()) return fTrue();
  if (out.size() == 1) return std::move(out[0]);
  return {FKind::And, {}, std::move(out)};
}

inline Formula fOr(std::vector<Formula> kids) {
  std::vector<Formula> flat;
  for (auto& k : kids) {
    if (k.kind == FKind::Or)
      for (auto& g : k.kids) flat.push_back(std::move(g));
    else
      flat.push_back(std::move(k));
  }
  std::vector<Formula> out;
  for (auto& k : flat) {
    if (k.kind == FKind::True) return fTrue();
    if (k.kind == FKind::False) continue;
    out.push_back(std::move(k));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(), [](const Formula& a, const Formula& b) { return a == b; }),
            out.end());
  if (out.empty()) return fFalse();
  if (out.size() == 1) return std::move(out[0]);
  return {FKind::Or, {}, std::move(out)};
}

// Temporal constructors absorb constants so residual `true` is the unique
// fully-satisfied formula (X true, F true, l U true all collapse).
inline Formula fEventually(Formula f) {
  if (f.kind == FKind::True || f.kind == FKind::False) return f;
  return {FKind::Eventually, {}, {std::move(f)}};
}

inline Formula fNext(Formula f) {
  if (f.kind == FKind::True || f.kind == FKind::False) return f;
  return {FKind::Next, {}, {std::move(f)}};
}

inline Formula fUntil(Formula l, Formula r) {
  if (r.kind == FKind::True || r.kind == FKind::False) return r;
  if (l.kind == FKind::False) return r;
  if (l.kind == FKind::True) return fEventually(std::move(r));
  return {FKind::Until, {}, {std::move(l), std::move(r)}};
}

// Pushes one negation through a normalized formula. Negating until/finally
// would leave the reachability fragment, so that is rejected.
inline Formula negate(const Formula& f) {
  switch (f.kind) {
    case FKind::True: return fFalse();
    case FKind::False: return fTrue();
    case FKind::Atom: return fNotAtom(f.atom);
    case FKind::NotAtom: return fAtom(f.atom);
    case FKind::And: {
      std::vector<Formula> ks;
      for (auto& k : f.kids) ks.push_back(negate(k));
      return fOr(std::move(ks));
    }
    case FKind::Or: {
      std::vector<Formula> ks;
      for (auto& k : f.kids) ks.push_back(negate(k));
      return fAnd(std::move(ks));
    }
    case FKind::Next: return fNext(negate(f.kids[0]));
    case FKind::Until:
    case FKind::Eventually:
      fail(Errc::NotCoSafe, "negation above an until/finally operator is outside the supported fragment");
  }
  fail(Errc::Syntax, "negate: bad node");
}

namespace detail {

struct Token {
  enum Type { Atom, True, False, Not, And, Or, Next, Until, Finally, Always, LPar, RPar, End } type;
  std::string text;
  size_t pos;
};

inline std::vector<Token> lex(const std::string& src) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < src.size()) {
    char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    size_t pos = i;
    if (c == '!') out.push_back({Token::Not, "!", pos}), ++i;
    else if (c == '&') {
      out.push_back({Token::And, "&", pos});
      i += (i + 1 < src.size() && src[i + 1] == '&') ? 2 : 1;  // & and && both work
    } else if (c == '|') {
      out.push_back({Token::Or, "|", pos});
      i += (i + 1 < src.size() && src[i + 1] == '|') ? 2 : 1;
    }
    else if (c == '(') out.push_back({Token::LPar, "(", pos}), ++i;
    else if (c == ')') out.push_back({Token::RPar, ")", pos}), ++i;
    else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i;
      while (j < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
        ++j;
      std::string word = src.substr(i, j - i);
      i = j;
      if (word == "X") out.push_back({Token::Next, word, pos});
      else if (word == "U") out.push_back({Token::Until, word, pos});
      else if (word == "F") out.push_back({Token::Finally, word, pos});
      else if (word == "G") out.push_back({Token::Always, word, pos});
      else if (word == "true") out.push_back({Token::True, word, pos});
      else if (word == "false") out.push_back({Token::False, word, pos});
      else out.push_back({Token::Atom, word, pos});
    } else {
      fail(Errc::Syntax, "unexpected character '" + std::string(1, c) + "' at offset " + std::to_string(pos));
    }
  }
  out.push_back({Token::End, "", src.size()});
  return out;
}

// Grammar (highest binding first): ! | X F  >  U (right-assoc)  >  &  >  |.
class Parser {
public:
  explicit Parser(const std::string& src) : toks_(lex(src)) {}

  Formula parse() {
    Formula f = parseOr();
    expect(Token::End, "end of input");
    return f;
  }

private:
  const Token& peek() const { return toks_[idx_]; }
  Token take() { return toks_[idx_++]; }
  void expect(Token::Type t, const char* what) {
    if (peek().type != t)
      fail(Errc::Syntax, std::string("expected ") + what + " at offset " + std::to_string(peek().pos));
    ++idx_;
  }

  Formula parseOr() {
    std::vector<Formula> kids{parseAnd()};
    while (peek().type == Token::Or) {
      take();
      kids.push_back(parseAnd());
    }
    return kids.size() == 1 ? std::move(kids[0]) : fOr(std::move(kids));
  }

  Formula parseAnd() {
    std::vector<Formula> kids{parseUntil()};
    while (peek().type == Token::And) {
      take();
      kids.push_back(parseUntil());
    }
    return kids.size() == 1 ? std::move(kids[0]) : fAnd(std::move(kids));
  }

  Formula parseUntil() {
    Formula left = parseUnary();
    if (peek().type == Token::Until) {
      take();
      Formula right = parseUntil();  // right-associative
      return fUntil(std::move(left), std::move(right));
    }
    return left;
  }

  Formula parseUnary() {
    switch (peek().type) {
      case Token::Not: {
        take();
        Formula f = parseUnary();
        return negate(f);
      }
      case Token::Next: {
        take();
        return fNext(parseUnary());
      }
      case Token::Finally: {
        take();
        return fEventually(parseUnary());
      }
      case Token::Always:
        fail(Errc::NotCoSafe, "the always operator is outside the supported fragment");
      default:
        return parseAtomic();
    }
  }

  Formula parseAtomic() {
    Token t = take();
    switch (t.type) {
      case Token::True: return fTrue();
      case Token::False: return fFalse();
      case Token::Atom: return fAtom(t.text);
      case Token::LPar: {
        Formula f = parseOr();
        expect(Token::RPar, "')'");
        return f;
      }
      default:
        fail(Errc::Syntax, "unexpected token '" + t.text + "' at offset " + std::to_string(t.pos));
    }
  }

  std::vector<Token> toks_;
  size_t idx_ = 0;
};

}  // namespace detail

inline Formula parseCoSafe(const std::string& src) { return detail::Parser(src).parse(); }

inline void collectAtoms(const Formula& f, std::set<std::string>& out) {
  if (f.kind == FKind::Atom || f.kind == FKind::NotAtom) out.insert(f.atom);
  for (const auto& k : f.kids) collectAtoms(k, out);
}

// One step of formula progression by a letter given as a set bitmask over the
// (sorted) atom list.
inline Formula progressMask(const Formula& f, uint32_t letter, const std::vector<std::string>& atoms) {
  switch (f.kind) {
    case FKind::True: return fTrue();
    case FKind::False: return fFalse();
    case FKind::Atom:
    case FKind::NotAtom: {
      auto it = std::lower_bound(atoms.begin(), atoms.end(), f.atom);
      bool present = it != atoms.end() && *it == f.atom &&
                     (letter >> static_cast<uint32_t>(it - atoms.begin())) & 1u;
      bool sat = f.kind == FKind::Atom ? present : !present;
      return sat ? fTrue() : fFalse();
    }
    case FKind::And: {
      std::vector<Formula> ks;
      for (const auto& k : f.kids) ks.push_back(progressMask(k, letter, atoms));
      return fAnd(std::move(ks));
    }
    case FKind::Or: {
      std::vector<Formula> ks;
      for (const auto& k : f.kids) ks.push_back(progressMask(k, letter, atoms));
      return fOr(std::move(ks));
    }
    case FKind::Next: return f.kids[0];
    case FKind::Until:
      return fOr({progressMask(f.kids[1], letter, atoms),
                  fAnd({progressMask(f.kids[0], letter, atoms), f})});
    case FKind::Eventually:
      return fOr({progressMask(f.kids[0], letter, atoms), f});
  }
  fail(Errc::Syntax, "progress: bad node");
}

inline Formula progress(const Formula& f, const std::set<std::string>& letter) {
  std::set<std::string> atomSet;
  collectAtoms(f, atomSet);
  std::vector<std::string> atoms(atomSet.begin(), atomSet.end());
  uint32_t mask = 0;
  for (size_t k = 0; k < atoms.size(); ++k)
    if (letter.count(atoms[k])) mask |= 1u << k;
  return progressMask(f, mask, atoms);
}

// Total deterministic automaton over the powerset alphabet of its atom list.
// Letters are bitmasks over `atoms` (sorted). Accepting locations are sinks.
struct Dfa {
  std::vector<std::string> atoms;
  int numLocations = 0;
  int initial = 0;
  std::vector<char> accepting;
  std::vector<char> trap;
  std::vector<char> preSink;
  std::vector<int> delta;  // numLocations * numLetters, row-major by location

  int numLetters() const { return 1 << static_cast<int>(atoms.size()); }
  int step(int q, int letter) const { return delta[static_cast<size_t>(q) * numLetters() + letter]; }
  int& stepRef(int q, int letter) { return delta[static_cast<size_t>(q) * numLetters() + letter]; }
};

// Bitmask of the atoms of `d` present in the (sorted) label set.
inline uint32_t letterMaskFor(const Dfa& d, const std::vector<std::string>& labels) {
  uint32_t mask = 0;
  for (size_t k = 0; k < d.atoms.size(); ++k)
    if (std::binary_search(labels.begin(), labels.end(), d.atoms[k])) mask |= 1u << k;
  return mask;
}

// Marks trap locations: those from which no accepting location is reachable.
inline void classifyLocations(Dfa& d) {
  const int L = d.numLetters();
  std::vector<std::vector<int>> rev(d.numLocations);
  for (int q = 0; q < d.numLocations; ++q)
    for (int w = 0; w < L; ++w) rev[d.step(q, w)].push_back(q);
  std::vector<char> canReach(d.numLocations, 0);
  std::deque<int> bfs;
  for (int q = 0; q < d.numLocations; ++q)
    if (d.accepting[q]) {
      canReach[q] = 1;
      bfs.push_back(q);
    }
  while (!bfs.empty()) {
    int q = bfs.front();
    bfs.pop_front();
    for (int p : rev[q])
      if (!canReach[p]) {
        canReach[p] = 1;
        bfs.push_back(p);
      }
  }
  d.trap.assign(d.numLocations, 0);
  for (int q = 0; q < d.numLocations; ++q) d.trap[q] = canReach[q] ? 0 : 1;
}

// Builds the progression automaton of a reachability formula. Locations are
// canonical residual formulas; `true` residuals are accepting sinks.
inline Dfa formulaToDfa(const Formula& phi, size_t locationCap = 1000000) {
  std::set<std::string> atomSet;
  collectAtoms(phi, atomSet);
  if (atomSet.size() > 16) fail(Errc::ClosureBlowup, "alphabet too large (more than 16 atoms)");
  Dfa d;
  d.atoms.assign(atomSet.begin(), atomSet.end());
  const int L = d.numLetters();

  std::map<Formula, int> index;
  std::vector<Formula> work;
  auto intern = [&](Formula f) {
    auto it = index.find(f);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(index.size());
    if (static_cast<size_t>(id) >= locationCap)
      fail(Errc::ClosureBlowup, "progression closure exceeded " + std::to_string(locationCap) + " locations");
    index.emplace(f, id);
    work.push_back(std::move(f));
    return id;
  };

  d.initial = intern(phi);
  for (size_t head = 0; head < work.size(); ++head) {
    Formula cur = work[head];  // copy: work may reallocate while interning
    d.delta.resize((head + 1) * static_cast<size_t>(L), -1);
    for (int w = 0; w < L; ++w) {
      int to = intern(progressMask(cur, static_cast<uint32_t>(w), d.atoms));
      d.delta[head * static_cast<size_t>(L) + w] = to;
    }
  }
  d.numLocations = static_cast<int>(work.size());
  d.delta.resize(static_cast<size_t>(d.numLocations) * L, -1);
  d.accepting.assign(d.numLocations, 0);
  for (int q = 0; q < d.numLocations; ++q) d.accepting[q] = work[q].kind == FKind::True ? 1 : 0;
  d.preSink.assign(d.numLocations, 0);
  classifyLocations(d);
  return d;
}

// Rewires every edge into an accepting location through a pre-sink so each
// acceptance is preceded by exactly one dedicated step. Existing locations
// whose successors are all accepting are marked rather than duplicated; one
// fresh pre-sink is shared per accepting target. An accepting initial gets a
// fresh pre-initial pre-sink.
inline Dfa insertPreSinks(const Dfa& in) {
  Dfa d = in;
  const int L = d.numLetters();
  const int oldCount = d.numLocations;

  auto addLocation = [&](int target) {
    int id = d.numLocations++;
    d.accepting.push_back(0);
    d.trap.push_back(0);
    d.preSink.push_back(1);
    for (int w = 0; w < L; ++w) d.delta.push_back(target);
    return id;
  };

  if (d.accepting[d.initial]) d.initial = addLocation(d.initial);

  for (int q = 0; q < oldCount; ++q) {
    if (d.accepting[q] || d.preSink[q]) continue;
    bool allAcc = true;
    for (int w = 0; w < L && allAcc; ++w) allAcc = d.accepting[d.step(q, w)];
    if (allAcc) d.preSink[q] = 1;
  }

  std::map<int, int> shared;  // accepting target -> its pre-sink
  for (int q = 0; q < oldCount; ++q) {
    if (d.accepting[q] || d.preSink[q]) continue;
    for (int w = 0; w < L; ++w) {
      int to = d.step(q, w);
      if (!d.accepting[to]) continue;
      auto it = shared.find(to);
      int pre = it != shared.end() ? it->second : (shared[to] = addLocation(to));
      d.stepRef(q, w) = pre;
    }
  }
  classifyLocations(d);
  return d;
}

// Step-bound wrapper: acceptance must happen within k letters, everything
// later falls into a trap. Accepting and trap classes of the source automaton
// are collapsed to single sinks. Apply before insertPreSinks.
inline Dfa withDeadline(const Dfa& in, int k) {
  if (k < 0) fail(Errc::InvalidConfig, "deadline must be nonnegative");
  Dfa d;
  d.atoms = in.atoms;
  const int L = d.numLetters();

  // Encoded node: -1 = accepting sink, -2 = trap sink, else q * (k + 1) + c.
  std::map<long long, int> index;
  std::vector<long long> work;
  auto intern = [&](long long key) {
    auto it = index.find(key);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(index.size());
    index.emplace(key, id);
    work.push_back(key);
    return id;
  };
  auto encode = [&](int q, int c) -> long long {
    if (in.accepting[q]) return -1;
    if (in.trap[q] || c > k) return -2;
    return static_cast<long long>(q) * (k + 1) + c;
  };

  d.initial = intern(encode(in.initial, 0));
  for (size_t head = 0; head < work.size(); ++head) {
    long long key = work[head];
    d.delta.resize((head + 1) * static_cast<size_t>(L), -1);
    for (int w = 0; w < L; ++w) {
      long long next;
      if (key == -1) next = -1;
      else if (key == -2) next = -2;
      else {
        int q = static_cast<int>(key / (k + 1));
        int c = static_cast<int>(key % (k + 1));
        next = encode(in.step(q, w), c + 1);
      }
      d.delta[head * static_cast<size_t>(L) + w] = intern(next);
    }
  }
  d.numLocations = static_cast<int>(work.size());
  d.accepting.assign(d.numLocations, 0);
  d.preSink.assign(d.numLocations, 0);
  for (int id = 0; id < d.numLocations; ++id)
    if (work[id] == -1) d.accepting[id] = 1;
  classifyLocations(d);
  return d;
}

// True when the run over `word` (letter bitmasks) visits an accepting location.
inline bool acceptsWord(const Dfa& d, const std::vector<uint32_t>& word) {
  int q = d.initial;
  if (d.accepting[q]) return true;
  for (uint32_t w : word) {
    q = d.step(q, static_cast<int>(w));
    if (d.accepting[q]) return true;
  }
  return false;
}

inline Json dfaToJson(const Dfa& d) {
  Json j;
  j["locations"] = Json::array();
  for (int q = 0; q < d.numLocations; ++q) j["locations"].push_back(q);
  j["initial"] = d.initial;
  j["accepting"] = Json::array();
  j["traps"] = Json::array();
  j["preSinks"] = Json::array();
  for (int q = 0; q < d.numLocations; ++q) {
    if (d.accepting[q]) j["accepting"].push_back(q);
    if (d.trap[q]) j["traps"].push_back(q);
    if (d.preSink[q]) j["preSinks"].push_back(q);
  }
  j["atoms"] = d.atoms;
  const int L = d.numLetters();
  Json edges = Json::array();
  for (int q = 0; q < d.numLocations; ++q) {
    std::map<int, std::vector<int>> byTarget;
    for (int w = 0; w < L; ++w) byTarget[d.step(q, w)].push_back(w);
    for (auto& [to, letters] : byTarget) {
      Json guard = Json::array();
      for (int w : letters) {
        Json letter = Json::array();
        for (size_t k = 0; k < d.atoms.size(); ++k)
          if ((w >> k) & 1) letter.push_back(d.atoms[k]);
        guard.push_back(letter);
      }
      edges.push_back({{"from", q}, {"guard", guard}, {"to", to}});
    }
  }
  j["edges"] = edges;
  return j;
}

inline Dfa dfaFromJson(const Json& j) {
  if (!j.is_object() || !j.contains("locations") || !j.contains("initial") ||
      !j.contains("accepting") || !j.contains("edges"))
    fail(Errc::InvalidDfa, "automaton JSON must carry locations, initial, accepting and edges");
  std::map<long long, int> remap;
  std::vector<long long> names;
  for (const auto& q : j.at("locations")) {
    long long name = q.get<long long>();
    if (remap.count(name)) fail(Errc::InvalidDfa, "duplicate location id");
    remap[name] = static_cast<int>(names.size());
    names.push_back(name);
  }
  auto mapLoc = [&](long long name) {
    auto it = remap.find(name);
    if (it == remap.end()) fail(Errc::InvalidDfa, "unknown location id " + std::to_string(name));
    return it->second;
  };

  Dfa d;
  d.numLocations = static_cast<int>(names.size());
  if (d.numLocations == 0) fail(Errc::InvalidDfa, "automaton has no locations");
  d.initial = mapLoc(j.at("initial").get<long long>());

  std::set<std::string> atomSet;
  if (j.contains("atoms"))
    for (const auto& a : j.at("atoms")) atomSet.insert(a.get<std::string>());
  for (const auto& e : j.at("edges"))
    for (const auto& letter : e.at("guard"))
      for (const auto& a : letter) atomSet.insert(a.get<std::string>());
  if (atomSet.size() > 16) fail(Errc::InvalidDfa, "alphabet too large (more than 16 atoms)");
  d.atoms.assign(atomSet.begin(), atomSet.end());
  const int L = d.numLetters();

  d.delta.assign(static_cast<size_t>(d.numLocations) * L, -1);
  for (const auto& e : j.at("edges")) {
    int from = mapLoc(e.at("from").get<long long>());
    int to = mapLoc(e.at("to").get<long long>());
    for (const auto& letter : e.at("guard")) {
      uint32_t mask = 0;
      for (const auto& a : letter) {
        auto it = std::lower_bound(d.atoms.begin(), d.atoms.end(), a.get<std::string>());
        mask |= 1u << static_cast<uint32_t>(it - d.atoms.begin());
      }
      int& slot = d.delta[static_cast<size_t>(from) * L + mask];
      if (slot != -1 && slot != to) fail(Errc::InvalidDfa, "nondeterministic edge");
      slot = to;
    }
  }
  for (int q = 0; q < d.numLocations; ++q)
    for (int w = 0; w < L; ++w)
      if (d.step(q, w) == -1)
        fail(Errc::InvalidDfa, "transition function not total at location " + std::to_string(names[q]));

  d.accepting.assign(d.numLocations, 0);
  for (const auto& q : j.at("accepting")) d.accepting[mapLoc(q.get<long long>())] = 1;

  classifyLocations(d);
  if (j.contains("traps")) {
    std::vector<char> declared(d.numLocations, 0);
    for (const auto& q : j.at("traps")) declared[mapLoc(q.get<long long>())] = 1;
    if (declared != d.trap) fail(Errc::InvalidDfa, "declared traps disagree with reachability");
  }

  d.preSink.assign(d.numLocations, 0);
  for (int q = 0; q < d.numLocations; ++q) {
    if (d.accepting[q]) continue;
    bool allAcc = true;
    for (int w = 0; w < L && allAcc; ++w) allAcc = d.accepting[d.step(q, w)];
    if (allAcc) d.preSink[q] = 1;
  }
  if (j.contains("preSinks"))
    for (const auto& q : j.at("preSinks"))
      if (!d.preSink[mapLoc(q.get<long long>())])
        fail(Errc::InvalidDfa, "declared pre-sink has a non-accepting successor");
  return d;
}

}  // namespace morap
