#pragma once

#include <deque>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "voxcam/core.hpp"
#include "voxcam/nn.hpp"

// Grammatical evolution: integer genomes select productions of a BNF grammar
// by leftmost derivation, codon mod alternative-count, wrapping a bounded
// number of times. Derived token strings are translated into architecture
// specs plus genome-encoded training hyperparameters.

namespace voxcam {

struct Grammar {
  std::map<std::string, std::vector<std::vector<std::string>>> productions;
  std::string start = "NETWORK";

  bool is_nonterminal(const std::string& sym) const { return productions.count(sym) != 0; }

  void validate() const {
    require(productions.count(start) != 0, Errc::malformed_grammar,
            "start symbol '" + start + "' has no productions");
    for (const auto& [nt, alts] : productions) {
      require(!alts.empty(), Errc::malformed_grammar, nt + " has no alternatives");
      for (const auto& alt : alts) {
        require(!alt.empty(), Errc::malformed_grammar, nt + " has an empty alternative");
      }
    }
  }

  // BNF-style text: `NAME ::= sym sym | sym ...`, one rule per line,
  // #-comments, continuation not needed at this size.
  static Grammar parse(const std::string& text) {
    Grammar g;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool first_rule = true;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto pos = t.find("::=");
      require(pos != std::string::npos, Errc::malformed_grammar,
              "line " + std::to_string(lineno) + ": expected NAME ::= ...");
      const std::string name = trim(t.substr(0, pos));
      require(!name.empty(), Errc::malformed_grammar,
              "line " + std::to_string(lineno) + ": empty rule name");
      std::vector<std::vector<std::string>> alts;
      for (const auto& alt_text : split(t.substr(pos + 3), '|')) {
        const auto syms = split_ws(alt_text);
        require(!syms.empty(), Errc::malformed_grammar,
                "line " + std::to_string(lineno) + ": empty alternative");
        alts.push_back(syms);
      }
      require(g.productions.count(name) == 0, Errc::malformed_grammar,
              "line " + std::to_string(lineno) + ": duplicate rule " + name);
      g.productions[name] = std::move(alts);
      if (first_rule) {
        g.start = name;
        first_rule = false;
      }
    }
    g.validate();
    // every referenced nonterminal-looking symbol must resolve to a terminal
    // spelling the translator knows or to a rule; undefined ALL-CAPS names are
    // grammar bugs
    for (const auto& [nt, alts] : g.productions) {
      for (const auto& alt : alts) {
        for (const auto& sym : alt) {
          if (!g.is_nonterminal(sym)) {
            bool caps = !sym.empty();
            for (char c : sym)
              caps = caps && (std::isupper(static_cast<unsigned char>(c)) || c == '_');
            require(!caps, Errc::malformed_grammar,
                    "nonterminal " + sym + " referenced from " + nt + " has no productions");
          }
        }
      }
    }
    return g;
  }
};

// The grammar used for architecture search. Kernel sizes 1-5, strides 1-3,
// filter counts starting at 16 and doubling per conv block, up to four blocks,
// FC width from {32,64,128,256,512}, dropout {0.1, 0.5, disabled}; learning
// rate and epoch budget ride along as genome-encoded hyperparameters.
inline const char* default_search_grammar_text() {
  return R"(# CNN architecture search grammar
NETWORK ::= BLOCKS TAIL HYPER
BLOCKS  ::= BLOCK | BLOCK BLOCK | BLOCK BLOCK BLOCK | BLOCK BLOCK BLOCK BLOCK
BLOCK   ::= conv KSIZE STRIDE bn relu POOL
POOL    ::= maxpool | nopool
KSIZE   ::= k1 | k2 | k3 | k4 | k5
STRIDE  ::= s1 | s2 | s3
TAIL    ::= flatten dense UNITS relu DROP dense_out
UNITS   ::= u32 | u64 | u128 | u256 | u512
DROP    ::= p10 | p50 | pnone
HYPER   ::= LRATE EPOCHS
LRATE   ::= lr1 | lr0.1 | lr0.01 | lr0.001 | lr0.0001 | lr0.00001
EPOCHS  ::= e10 | e50 | e100
)";
}

inline Grammar default_search_grammar() { return Grammar::parse(default_search_grammar_text()); }

struct Genome {
  std::vector<std::uint32_t> codons;
  int max_wraps = 2;

  void validate() const {
    require(codons.size() >= 16, Errc::config_error, "genome needs at least 16 codons");
    require(max_wraps >= 0, Errc::config_error, "max_wraps must be >= 0");
  }

  std::uint64_t hash() const {
    std::uint64_t h = fnv1a64(codons.data(), codons.size() * sizeof(std::uint32_t));
    return splitmix64(h ^ static_cast<std::uint64_t>(max_wraps));
  }

  static Genome random(std::size_t length, Rng& rng, int max_wraps = 2) {
    Genome g;
    g.max_wraps = max_wraps;
    g.codons.resize(length);
    for (auto& c : g.codons) c = static_cast<std::uint32_t>(rng.next_u64());
    return g;
  }
};

struct DerivedIndividual {
  ArchitectureSpec spec;
  float learning_rate = 0.001f;
  int epochs = 10;
  std::vector<std::string> tokens;  // terminal string of the derivation
};

namespace detail {

// Leftmost derivation; a codon is consumed only when a choice exists.
inline std::vector<std::string> derive_tokens(const Genome& genome, const Grammar& grammar) {
  genome.validate();
  grammar.validate();
  std::deque<std::string> pending{grammar.start};
  std::vector<std::string> tokens;
  std::size_t next_codon = 0;
  int wraps = 0;
  std::size_t expansions = 0;
  while (!pending.empty()) {
    require(++expansions < 10000, Errc::derivation_overrun, "derivation did not terminate");
    const std::string sym = pending.front();
    pending.pop_front();
    if (!grammar.is_nonterminal(sym)) {
      tokens.push_back(sym);
      continue;
    }
    const auto& alts = grammar.productions.at(sym);
    std::size_t choice = 0;
    if (alts.size() > 1) {
      if (next_codon >= genome.codons.size()) {
        require(wraps < genome.max_wraps, Errc::derivation_overrun,
                "codons exhausted after " + std::to_string(wraps) + " wraps");
        ++wraps;
        next_codon = 0;
      }
      choice = genome.codons[next_codon++] % alts.size();
    }
    const auto& alt = alts[choice];
    pending.insert(pending.begin(), alt.begin(), alt.end());
  }
  return tokens;
}

inline float parse_lr_token(const std::string& tok) {
  return std::stof(tok.substr(2));
}

}  // namespace detail

// Derives and shape-checks an architecture for the given input. Filter counts
// are forced to 16 * 2^block_index regardless of the genome. Throws
// DerivationOverrun when codons run out and ShapeUnderflow when the derived
// topology cannot process the input; fitness evaluation maps both to zero.
inline DerivedIndividual derive_architecture(const Genome& genome, const Grammar& grammar,
                                             const Shape& input_shape) {
  DerivedIndividual out;
  out.tokens = detail::derive_tokens(genome, grammar);
  out.spec.input_shape = input_shape;
  out.spec.class_count = 2;

  int conv_block = 0;
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    const std::string& tok = out.tokens[i];
    auto next = [&](const char* what) -> const std::string& {
      require(i + 1 < out.tokens.size(), Errc::malformed_grammar,
              std::string("expected ") + what + " after " + tok);
      return out.tokens[++i];
    };
    if (tok == "conv") {
      const int filters = 16 << std::min(conv_block, 6);
      const int kernel = std::stoi(next("kernel token").substr(1));
      const int stride = std::stoi(next("stride token").substr(1));
      out.spec.layers.push_back(LayerSpec::Conv2D(filters, kernel, stride, 0));
      ++conv_block;
    } else if (tok == "bn") {
      out.spec.layers.push_back(LayerSpec::BatchNorm());
    } else if (tok == "relu") {
      out.spec.layers.push_back(LayerSpec::ReLU());
    } else if (tok == "maxpool") {
      out.spec.layers.push_back(LayerSpec::MaxPool(2, 2));
    } else if (tok == "nopool") {
      // block without subsampling
    } else if (tok == "flatten") {
      out.spec.layers.push_back(LayerSpec::Flatten());
    } else if (tok == "dense") {
      out.spec.layers.push_back(LayerSpec::Dense(std::stoi(next("units token").substr(1))));
    } else if (tok == "dense_out") {
      out.spec.layers.push_back(LayerSpec::Dense(out.spec.class_count));
    } else if (tok == "p10") {
      out.spec.layers.push_back(LayerSpec::Dropout(0.1f));
    } else if (tok == "p50") {
      out.spec.layers.push_back(LayerSpec::Dropout(0.5f));
    } else if (tok == "pnone") {
      // dropout disabled
    } else if (tok.rfind("lr", 0) == 0) {
      out.learning_rate = detail::parse_lr_token(tok);
    } else if (tok.rfind("e", 0) == 0 && tok.size() > 1 &&
               std::isdigit(static_cast<unsigned char>(tok[1]))) {
      out.epochs = std::stoi(tok.substr(1));
    } else {
      raise(Errc::malformed_grammar, "translator does not know terminal '" + tok + "'");
    }
  }
  out.spec.validate();  // static shape check; throws ShapeUnderflow
  return out;
}

// Table-2 conformance of a derived spec: kernels 1-5, strides 1-3, filters
// 16-doubling per conv block, FC width within the tuned set.
inline bool satisfies_search_ranges(const ArchitectureSpec& spec) {
  int conv_block = 0;
  bool tail_units_ok = true;
  const std::vector<int> fc_set{32, 64, 128, 256, 512};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind == LayerKind::conv2d || l.kind == LayerKind::conv3d) {
      if (l.kernel < 1 || l.kernel > 5) return false;
      if (l.stride < 1 || l.stride > 3) return false;
      if (l.filters != (16 << conv_block)) return false;
      ++conv_block;
    } else if (l.kind == LayerKind::dense && i + 1 < spec.layers.size()) {
      tail_units_ok = std::find(fc_set.begin(), fc_set.end(), l.units) != fc_set.end();
      if (!tail_units_ok) return false;
    } else if (l.kind == LayerKind::dropout) {
      if (!(l.drop_p == 0.1f || l.drop_p == 0.5f)) return false;
    }
  }
  return conv_block >= 1 && conv_block <= 4;
}

inline std::string genome_to_text(const Genome& g) {
  std::ostringstream out;
  out << "wraps " << g.max_wraps << "\n";
  for (std::size_t i = 0; i < g.codons.size(); ++i) {
    if (i) out << (i % 16 == 0 ? "\n" : " ");
    out << g.codons[i];
  }
  out << "\n";
  return out.str();
}

inline Genome genome_from_text(const std::string& text) {
  Genome g;
  const auto toks = split_ws(text);
  std::size_t i = 0;
  if (toks.size() >= 2 && toks[0] == "wraps") {
    g.max_wraps = std::stoi(toks[1]);
    i = 2;
  }
  for (; i < toks.size(); ++i)
    g.codons.push_back(static_cast<std::uint32_t>(std::stoul(toks[i])));
  g.validate();
  return g;
}

}  // namespace voxcam
