#ifndef DEHAZE_PARAM_STORE_HPP
#define DEHAZE_PARAM_STORE_HPP

#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "dehaze/error.hpp"

namespace dehaze {

/// One named parameter array. Buffers (batch-norm running statistics) are
/// stored alongside weights but are not trainable.
template <typename T>
struct ParamArray {
    std::vector<int> shape;
    std::vector<T> values;
    bool trainable = true;

    std::size_t numel() const {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    }
};

/// Hierarchically named parameter archive ("enc1.conv.weight", ...), ordered by name.
template <typename T>
class ParamStore {
public:
    using Map = std::map<std::string, ParamArray<T>>;

    ParamArray<T>& declare(const std::string& name, std::vector<int> shape, bool trainable = true, T fill = T(0)) {
        ParamArray<T> p;
        p.shape = std::move(shape);
        p.trainable = trainable;
        p.values.assign(p.numel(), fill);
        return entries_[name] = std::move(p);
    }

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    ParamArray<T>& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end())
            fail(ErrorKind::InvalidSpec, "parameter '" + name + "' missing from store");
        return it->second;
    }
    const ParamArray<T>& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end())
            fail(ErrorKind::InvalidSpec, "parameter '" + name + "' missing from store");
        return it->second;
    }

    T* data(const std::string& name) { return at(name).values.data(); }
    const T* data(const std::string& name) const { return at(name).values.data(); }

    const Map& entries() const noexcept { return entries_; }
    Map& entries() noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    /// Total scalar count; buffers excluded unless requested.
    std::size_t parameter_count(bool include_buffers = false) const {
        std::size_t n = 0;
        for (const auto& [name, p] : entries_)
            if (p.trainable || include_buffers)
                n += p.values.size();
        return n;
    }

    /// Same layout, every value zero.
    ParamStore zeros_like() const {
        ParamStore out;
        for (const auto& [name, p] : entries_)
            out.declare(name, p.shape, p.trainable, T(0));
        return out;
    }

    void fill(T v) {
        for (auto& [name, p] : entries_)
            std::fill(p.values.begin(), p.values.end(), v);
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& [name, p] : entries_) {
            auto& q = out.declare(name, p.shape, p.trainable);
            for (std::size_t i = 0; i < p.values.size(); ++i)
                q.values[i] = static_cast<U>(p.values[i]);
        }
        return out;
    }

    /// Throws unless `other` declares exactly the same names and shapes.
    void require_same_layout(const ParamStore& other, const char* what) const {
        if (entries_.size() != other.entries_.size())
            fail(ErrorKind::ShapeMismatch, std::string(what) + ": parameter sets differ");
        auto a = entries_.begin();
        auto b = other.entries_.begin();
        for (; a != entries_.end(); ++a, ++b)
            if (a->first != b->first || a->second.shape != b->second.shape)
                fail(ErrorKind::ShapeMismatch, std::string(what) + ": mismatch at '" + a->first + "'");
    }

    friend bool operator==(const ParamStore& a, const ParamStore& b) {
        if (a.entries_.size() != b.entries_.size())
            return false;
        auto x = a.entries_.begin();
        auto y = b.entries_.begin();
        for (; x != a.entries_.end(); ++x, ++y)
            if (x->first != y->first || x->second.shape != y->second.shape || x->second.values != y->second.values)
                return false;
        return true;
    }

private:
    Map entries_;
};

} // namespace dehaze

#endif // DEHAZE_PARAM_STORE_HPP
