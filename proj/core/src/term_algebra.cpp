#include "pacs/term_algebra.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <stdexcept>

#include "pacs/error.hpp"

namespace pacs::terms {

namespace {

thread_local int g_fresh = 1000;
int fresh() { return ++g_fresh; }

// Labels occurring twice become one extra Laplacian.
void canon_labels(std::vector<int>& labels, int& lap) {
    std::map<int, int> cnt;
    for (int l : labels) ++cnt[l];
    std::vector<int> out;
    for (int l : labels) {
        const int c = cnt[l];
        if (c > 2) throw std::logic_error("label used more than twice in a term");
        if (c == 1) out.push_back(l);
    }
    for (auto& [l, c] : cnt)
        if (c == 2) ++lap;
    std::sort(out.begin(), out.end());
    labels = std::move(out);
}

// Returns false when the factor vanishes (derivative of lambda).
bool make_factor(Base b, std::vector<int> labels, int lap, Factor& out) {
    if (b == Base::Lam && (!labels.empty() || lap > 0)) return false;
    if (b == Base::K && (!labels.empty() || lap > 0)) b = Base::J;
    canon_labels(labels, lap);
    out = Factor{b, std::move(labels), lap};
    return true;
}

std::vector<int> all_labels(const Term& t) {
    std::vector<int> r = t.outer;
    for (const auto& f : t.factors) r.insert(r.end(), f.labels.begin(), f.labels.end());
    return r;
}

Expr rename_internal(const Expr& e) {
    Expr out;
    out.reserve(e.size());
    for (const auto& t : e) {
        std::map<int, int> cnt;
        for (int l : all_labels(t)) ++cnt[l];
        std::map<int, int> ren;
        for (auto& [l, c] : cnt)
            if (c == 2) ren[l] = fresh();
        auto r = [&](int l) {
            auto it = ren.find(l);
            return it == ren.end() ? l : it->second;
        };
        Term nt = t;
        for (int& l : nt.outer) l = r(l);
        std::sort(nt.outer.begin(), nt.outer.end());
        for (auto& f : nt.factors) {
            for (int& l : f.labels) l = r(l);
            std::sort(f.labels.begin(), f.labels.end());
        }
        out.push_back(std::move(nt));
    }
    return out;
}

Expr leibniz(const Term& t) {
    std::vector<int> labs = t.outer;
    for (int i = 0; i < t.outer_lap; ++i) {
        const int a = fresh();
        labs.push_back(a);
        labs.push_back(a);
    }
    const std::size_t k = t.factors.size();
    const std::size_t nl = labs.size();
    std::map<std::vector<Factor>, std::int64_t> acc;
    std::vector<std::size_t> assign(nl, 0);
    while (true) {
        std::vector<Factor> nf;
        bool ok = true;
        for (std::size_t i = 0; i < k && ok; ++i) {
            std::vector<int> ls = t.factors[i].labels;
            for (std::size_t j = 0; j < nl; ++j)
                if (assign[j] == i) ls.push_back(labs[j]);
            Factor f;
            ok = make_factor(t.factors[i].base, ls, t.factors[i].lap, f);
            if (ok) nf.push_back(std::move(f));
        }
        if (ok) acc[nf] += t.coeff;
        std::size_t p = 0;
        while (p < nl && ++assign[p] == k) assign[p++] = 0;
        if (p == nl) break;
    }
    Expr out;
    for (auto& [fs, c] : acc)
        if (c != 0) out.push_back(Term{c, {}, 0, fs});
    return out;
}

}  // namespace

Expr factor(Base b, std::vector<int> labels, int lap) {
    Factor f;
    if (!make_factor(b, std::move(labels), lap, f)) return {};
    return {Term{1, {}, 0, {f}}};
}

Expr expand(const Expr& e) {
    Expr out;
    for (const auto& t : e) {
        if (!t.outer.empty() || t.outer_lap > 0) {
            Expr l = leibniz(t);
            out.insert(out.end(), l.begin(), l.end());
        } else {
            out.push_back(t);
        }
    }
    return out;
}

Expr add(const std::vector<Expr>& es) {
    Expr r;
    for (const auto& e : es) r.insert(r.end(), e.begin(), e.end());
    return r;
}

Expr scale(std::int64_t c, const Expr& e) {
    Expr r = e;
    for (auto& t : r) t.coeff *= c;
    return r;
}

Expr mul(const std::vector<Expr>& es) {
    Expr res{Term{1, {}, 0, {}}};
    for (const auto& e0 : es) {
        Expr e = expand(rename_internal(e0));
        Expr next;
        next.reserve(res.size() * e.size());
        for (const auto& a : res)
            for (const auto& b : e) {
                Term t{a.coeff * b.coeff, {}, 0, a.factors};
                t.factors.insert(t.factors.end(), b.factors.begin(), b.factors.end());
                next.push_back(std::move(t));
            }
        res = std::move(next);
    }
    return res;
}

Expr comm(const Expr& a, const Expr& b) { return add({mul({a, b}), scale(-1, mul({b, a}))}); }

Expr d(const std::vector<int>& labels, int lap, const Expr& e0) {
    Expr out;
    for (auto t : rename_internal(e0)) {
        if (t.factors.size() == 1 && t.outer.empty() && t.outer_lap == 0) {
            std::vector<int> ls = t.factors[0].labels;
            ls.insert(ls.end(), labels.begin(), labels.end());
            Factor f;
            if (!make_factor(t.factors[0].base, ls, t.factors[0].lap + lap, f)) continue;
            t.factors[0] = f;
            out.push_back(std::move(t));
            continue;
        }
        t.outer.insert(t.outer.end(), labels.begin(), labels.end());
        t.outer_lap += lap;
        canon_labels(t.outer, t.outer_lap);
        out.push_back(std::move(t));
    }
    return out;
}

namespace {

bool has_k(const Term& t) {
    return std::any_of(t.factors.begin(), t.factors.end(),
                       [](const Factor& f) { return f.base != Base::J; });
}

Expr lift_term(const Term& t, int m);

Expr lift_all(const Expr& e, int m) {
    Expr out;
    for (const auto& t : e) {
        Expr l = lift_term(t, m);
        out.insert(out.end(), l.begin(), l.end());
    }
    return out;
}

// A with a derivative label x added at position j (product rule pieces).
Term with_extra(const Term& t, std::size_t j, int x, bool& ok) {
    Term r = t;
    std::vector<int> ls = r.factors[j].labels;
    ls.push_back(x);
    Factor f;
    ok = make_factor(r.factors[j].base, ls, r.factors[j].lap, f);
    if (ok) r.factors[j] = f;
    return r;
}

Term with_outer(Term t, int x) {
    t.outer.push_back(x);
    canon_labels(t.outer, t.outer_lap);
    return t;
}

Expr lift_term(const Term& t, int m) {
    if (has_k(t)) return {t};
    const auto& fs = t.factors;
    std::size_t i1 = fs.size();
    for (std::size_t i = 0; i < fs.size(); ++i)
        if (fs[i].order() == 1) {
            i1 = i;
            break;
        }
    if (i1 == fs.size()) throw std::logic_error("lift: term has no first-order factor: " + to_string(t));

    std::size_t big = fs.size();
    for (std::size_t i = 0; i < fs.size(); ++i)
        if (i != i1 && fs[i].order() >= m) {
            big = i;
            break;
        }
    Expr res;
    if (big != fs.size()) {
        // F = d_x G: F A = d_x(G A) - G d_x A
        const Factor& fb = fs[big];
        int x;
        Factor g = fb;
        if (!fb.labels.empty()) {
            x = fb.labels.front();
            g.labels.erase(g.labels.begin());
        } else {
            x = fresh();
            g.labels = {x};
            g.lap -= 1;
        }
        Term base = t;
        base.factors[big] = g;
        res.push_back(with_outer(base, x));
        for (std::size_t j = 0; j < fs.size(); ++j) {
            if (j == big) continue;
            bool ok;
            Term r = with_extra(base, j, x, ok);
            if (!ok) continue;
            r.coeff = -r.coeff;
            res.push_back(std::move(r));
        }
        return lift_all(res, m);
    }
    // d_x J = d_x K: A (d_x K) B = d_x(A K B) - (d_x A) K B - A K d_x B
    const int x = fs[i1].labels.front();
    Term base = t;
    base.factors[i1] = Factor{Base::K, {}, 0};
    res.push_back(with_outer(base, x));
    for (std::size_t j = 0; j < fs.size(); ++j) {
        if (j == i1) continue;
        bool ok;
        Term r = with_extra(base, j, x, ok);
        if (!ok) continue;
        r.coeff = -r.coeff;
        res.push_back(std::move(r));
    }
    return res;
}

}  // namespace

Expr lift(const Expr& e, int m) { return lift_all(e, m); }

Expr simplify(const Expr& e) {
    std::map<std::tuple<std::vector<int>, int, std::vector<Factor>>, std::int64_t> acc;
    std::vector<std::tuple<std::vector<int>, int, std::vector<Factor>>> order;
    for (const auto& t : e) {
        std::map<int, int> ren;
        auto r = [&](int l) {
            auto it = ren.find(l);
            if (it != ren.end()) return it->second;
            const int v = static_cast<int>(ren.size()) + 1;
            ren[l] = v;
            return v;
        };
        std::vector<int> ol;
        for (int l : t.outer) ol.push_back(r(l));
        std::sort(ol.begin(), ol.end());
        std::vector<Factor> fs = t.factors;
        for (auto& f : fs) {
            for (int& l : f.labels) l = r(l);
            std::sort(f.labels.begin(), f.labels.end());
        }
        auto key = std::make_tuple(ol, t.outer_lap, fs);
        auto [it, inserted] = acc.emplace(key, 0);
        if (inserted) order.push_back(key);
        it->second += t.coeff;
    }
    Expr out;
    for (const auto& key : order) {
        const auto c = acc[key];
        if (c == 0) continue;
        out.push_back(Term{c, std::get<0>(key), std::get<1>(key), std::get<2>(key)});
    }
    return out;
}

// ------------------------------------------------------------------ parser

namespace {

class Parser {
public:
    Parser(const std::string& s, int m, const std::map<std::string, std::string>& macros, int depth)
        : s_(s), m_(m), macros_(macros), depth_(depth) {}

    Expr parse_all() {
        Expr e = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected trailing input");
        return e;
    }

private:
    const std::string& s_;
    int m_;
    const std::map<std::string, std::string>& macros_;
    int depth_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw ArgumentError("term table parse error at " + std::to_string(pos_) + ": " + what + " in '" + s_ + "'");
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    char peek() {
        skip();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }
    bool accept(char c) {
        if (peek() == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }
    bool at_word(const char* w) {
        skip();
        return s_.compare(pos_, std::char_traits<char>::length(w), w) == 0;
    }

    Expr expr() {
        std::vector<Expr> parts;
        bool neg = false;
        if (accept('-')) neg = true;
        else accept('+');
        parts.push_back(scale(neg ? -1 : 1, term()));
        while (true) {
            if (accept('+')) parts.push_back(term());
            else if (accept('-')) parts.push_back(scale(-1, term()));
            else break;
        }
        return add(parts);
    }

    Expr term() {
        std::int64_t c = 1;
        if (std::isdigit(static_cast<unsigned char>(peek()))) {
            c = 0;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) c = c * 10 + (s_[pos_++] - '0');
            accept('*');
        }
        return scale(c, product());
    }

    bool starts_unary() {
        const char c = peek();
        return c == 'J' || c == 'K' || c == 'l' || c == 'd' || c == 'D' || c == '(' || c == '[' || c == '$';
    }

    Expr product() {
        std::vector<Expr> fs{unary()};
        while (true) {
            if (accept('*')) {
                fs.push_back(unary());
            } else if (starts_unary()) {
                fs.push_back(unary());
            } else {
                break;
            }
        }
        return fs.size() == 1 ? fs[0] : mul(fs);
    }

    Expr unary() {
        if (at_word("lift(")) {
            pos_ += 5;
            Expr e = expr();
            expect(')');
            if (m_ <= 0) fail("lift used without an order");
            return lift(e, m_);
        }
        const char c = peek();
        if (c == 'd' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '[') {
            pos_ += 2;
            std::vector<int> labels;
            while (pos_ < s_.size() && std::islower(static_cast<unsigned char>(s_[pos_])))
                labels.push_back(s_[pos_++] - 'a' + 1);
            expect(']');
            return d(labels, 0, unary());
        }
        if (c == 'D') {
            ++pos_;
            int times = 1;
            if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) times = s_[pos_++] - '0';
            return d({}, times, unary());
        }
        return primary();
    }

    Expr primary() {
        const char c = peek();
        if (c == 'J') {
            ++pos_;
            return factor(Base::J);
        }
        if (c == 'K') {
            ++pos_;
            return factor(Base::K);
        }
        if (c == 'l') {
            ++pos_;
            return factor(Base::Lam);
        }
        if (accept('(')) {
            Expr e = expr();
            expect(')');
            return e;
        }
        if (accept('[')) {
            Expr a = expr();
            expect(',');
            Expr b = expr();
            expect(']');
            return comm(a, b);
        }
        if (accept('$')) {
            std::string name;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                name += s_[pos_++];
            auto it = macros_.find(name);
            if (it == macros_.end()) fail("unknown macro $" + name);
            if (depth_ > 16) fail("macro nesting too deep");
            Parser sub(it->second, m_, macros_, depth_ + 1);
            return sub.parse_all();
        }
        fail("unexpected character");
    }
};

}  // namespace

Expr parse(const std::string& text, int m, const std::map<std::string, std::string>& macros) {
    Parser p(text, m, macros, 0);
    return p.parse_all();
}

std::string to_string(const Term& t) {
    std::ostringstream os;
    os << (t.coeff >= 0 ? "+" : "-") << std::abs(t.coeff) << " ";
    auto lab = [&](const std::vector<int>& ls, int lap) {
        std::string s;
        if (!ls.empty()) {
            s += "d[";
            for (int l : ls) s += (l <= 26 ? std::string(1, static_cast<char>('a' + l - 1)) : "_" + std::to_string(l));
            s += "]";
        }
        for (int i = 0; i < lap; ++i) s += "D";
        return s;
    };
    os << lab(t.outer, t.outer_lap) << "(";
    for (std::size_t i = 0; i < t.factors.size(); ++i) {
        if (i) os << " ";
        const auto& f = t.factors[i];
        os << lab(f.labels, f.lap) << (f.base == Base::J ? "J" : f.base == Base::K ? "K" : "l");
    }
    os << ")";
    return os.str();
}

std::string to_string(const Expr& e) {
    std::string s;
    for (const auto& t : e) s += to_string(t) + "\n";
    return s;
}

ExprStats stats(const Expr& e) {
    ExprStats s;
    for (const auto& t : e) {
        s.max_outer_order = std::max(s.max_outer_order, static_cast<int>(t.outer.size()) + 2 * t.outer_lap);
        s.max_factors = std::max(s.max_factors, static_cast<int>(t.factors.size()));
        for (const auto& f : t.factors) s.max_factor_order = std::max(s.max_factor_order, f.order());
    }
    return s;
}

}  // namespace pacs::terms
