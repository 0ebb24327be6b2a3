#include "pacs/identity_tables.hpp"

#include <map>

#include "pacs/error.hpp"

namespace pacs::tables {

using terms::Expr;

namespace {

void check_m(int m) {
    if (m < 1 || m > 3) throw ArgumentError("divergence structure tables exist for m in {1,2,3}, got " + std::to_string(m));
}

// Lap^m J in table syntax.
std::string lap_j(int m) { return m == 1 ? "DJ" : "D" + std::to_string(m) + "J"; }

const std::map<std::string, std::string>& macros() {
    static const std::map<std::string, std::string> mc = {
        {"W", "(d[r]J*d[r]J)"},
        {"F1", "(DJ*d[p]J)"},
        {"F2", "(d[p]J*DJ)"},
    };
    return mc;
}

const std::string kM1 = "d[p][K,[d[p]J,J]]";

// I and III bookkeeping; W = d_r J d_r J.
const std::string kM2 =
    "D[K,[DJ,J]] - 2 d[p][K,[DJ,d[p]J]]"
    " + 2*( d[p]D(l*K*d[p]J) - D(l*K*DJ)"
    "     + 2 d[p](K*d[p]$W) - D(K*$W)"
    "     + d[p]D(d[p]J*K*l) - D(DJ*K*l)"
    "     + 2 d[p](d[p]$W*K) - D($W*K) )";

std::string tpiece(const std::string& f, const std::string& lam) {
    return "(" + lam + " + D(K*d[p]" + f + ") - 2 lift(d[q](d[q]J*d[p]" + f + ")) + lift(d[p](DJ*" + f + ")))";
}

std::string tpiece_r(const std::string& f, const std::string& lam) {
    return "(" + lam + " + D(d[p]" + f + "*K) - 2 lift(d[q](d[p]" + f + "*d[q]J)) + lift(d[p](" + f + "*DJ)))";
}

std::string build_m3() {
    const std::string t1a =
        "( d[p][K,[d[p]DJ,DJ]]"
        " + d[q]D[K,[d[q]DJ,J]]"
        " - D[K,[d[q]DJ,d[q]J]]"
        " - 2 d[pq][K,[d[q]DJ,d[p]J]]"
        " + 2 d[p][K,[d[q]DJ,d[pq]J]]"
        " + 2 lift(d[p][d[q]J,[d[q]DJ,d[p]J]]) )";
    const std::string tt3 = "( lift(d[p](d[p]J*DJ*DJ)) + lift(d[p](DJ*DJ*d[p]J)) )";
    const std::string tt4 =
        "( lift(d[q]D[d[q]J,[DJ,J]]) - lift(D[d[q]J,[DJ,d[q]J]])"
        " - 2 lift(D($W*DJ)) - 2 lift(D(DJ*$W)) )";
    const std::string tvl =
        "( d[p]D2(l*K*d[p]J) - D2(l*K*DJ) + D(K*D$W)"
        " - 2*( lift(d[pq](d[p]J*d[q]$W)) - lift(d[p](d[pq]J*d[q]$W)) )"
        " + lift(d[p](DJ*d[p]$W)) - lift(d[p](d[p]DJ*$W)) )";
    const std::string tvr =
        "( d[p]D2(d[p]J*K*l) - D2(DJ*K*l) + D(D$W*K)"
        " - 2*( lift(d[pq](d[q]$W*d[p]J)) - lift(d[p](d[q]$W*d[pq]J)) )"
        " + lift(d[p](d[p]$W*DJ)) - lift(d[p]($W*d[p]DJ)) )";
    const std::string tiii =
        "( " + tpiece("$F1", "D2(l*DJ*K) - d[p]D(l*d[p]DJ*K)") + " + " +
        tpiece("$F2", "D2(l*K*DJ) - d[p]D(l*K*d[p]DJ)") + " + " +
        tpiece_r("$F1", "D2(DJ*K*l) - d[p]D(d[p]DJ*K*l)") + " + " +
        tpiece_r("$F2", "D2(K*DJ*l) - d[p]D(K*d[p]DJ*l)") + " )";
    return t1a + " - " + tt3 + " - " + tt4 + " + 2*(" + tvl + " + " + tvr + ") + 2*" + tiii +
           " - 2 lift(d[p](DJ*d[p]J*DJ)) + 4 lift(d[p](d[p]J*DJ*DJ)) + 4 lift(d[p](DJ*DJ*d[p]J))";
}

const std::string& m3_source() {
    static const std::string s = build_m3();
    return s;
}

const char* const kQ[3] = {
    "2 d[p]J*d[p]J",
    "2 d[p]DJ*d[p]J + 2 d[p]J*d[p]DJ + 2 DJ*DJ + 2 D(d[p]J*d[p]J)",
    "2 d[p]D2J*d[p]J + 2 d[p]J*d[p]D2J + D2J*DJ + DJ*D2J"
    " + 2 D(d[p]DJ*d[p]J + d[p]J*d[p]DJ) + 2 D(DJ*DJ) + 2 D2(d[p]J*d[p]J)",
};

const char* const kLemma[kLemmaTerms] = {
    "d[p](d[p]J*d[qr]J*d[qr]J)",
    "d[pq](d[p]J*d[r]J*d[qr]J)",
    "d[p](d[q]J*d[p]J*d[q]DJ)",
    "D2(d[p]J*d[p]J)",
};

const char* const kLemmaLabel[kLemmaTerms] = {
    "d(dJ*d2J*d2J)",
    "d2(dJ*dJ*d2J)",
    "d(dJ*dJ*d3J)",
    "d4(dJ*dJ)",
};

}  // namespace

const std::string& t_lambda_source(int m) {
    check_m(m);
    static const std::string m1 = kM1, m2 = kM2;
    return m == 1 ? m1 : m == 2 ? m2 : m3_source();
}

Expr t_lambda(int m) { return terms::simplify(terms::parse(t_lambda_source(m), m, macros())); }

Expr q_compact(int m) {
    check_m(m);
    const std::string l = lap_j(m);
    return terms::parse("-(" + l + "*J + J*" + l + ")");
}

Expr t_m(int m) {
    check_m(m);
    const std::string l = lap_j(m);
    const std::string q = "(-(" + l + "*J + J*" + l + "))";
    return terms::simplify(terms::parse("J*" + q + " + " + q + "*J"));
}

Expr prop82_residual(int m) {
    check_m(m);
    const std::string l = lap_j(m);
    Expr r = terms::add({t_m(m), terms::parse("[K,[" + l + ",J]]"), terms::scale(-1, t_lambda(m))});
    return terms::simplify(r);
}

Expr q_expanded(int m) {
    check_m(m);
    return terms::simplify(terms::parse(kQ[m - 1]));
}

Expr t1_double_commutator() { return terms::simplify(terms::parse("[d[p]J,[d[p]J,J]]")); }

Expr lemma_raw(int which) {
    if (which < 0 || which >= kLemmaTerms) throw ArgumentError("lemma term index out of range");
    return terms::simplify(terms::parse(kLemma[which]));
}

Expr lemma_rewritten(int which) {
    if (which < 0 || which >= kLemmaTerms) throw ArgumentError("lemma term index out of range");
    return terms::simplify(terms::parse(std::string("lift(") + kLemma[which] + ")", 3));
}

std::string lemma_label(int which) {
    if (which < 0 || which >= kLemmaTerms) throw ArgumentError("lemma term index out of range");
    return kLemmaLabel[which];
}

}  // namespace pacs::tables
