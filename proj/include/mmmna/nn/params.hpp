#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/tape.hpp"
#include "mmmna/core/tensor.hpp"

namespace mmmna::nn {

/// Named trainable parameters plus non-trainable buffers (normalization running statistics).
/// Indices are stable once assigned.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  std::size_t add(std::string name, Tensor<T> value) { return insert(params_, std::move(name), std::move(value)); }
  std::size_t add_buffer(std::string name, Tensor<T> value) {
    return insert(buffers_, std::move(name), std::move(value));
  }

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t buffer_count() const noexcept { return buffers_.size(); }

  Entry& param(std::size_t i) { return params_.at(i); }
  const Entry& param(std::size_t i) const { return params_.at(i); }
  Entry& buffer(std::size_t i) { return buffers_.at(i); }
  const Entry& buffer(std::size_t i) const { return buffers_.at(i); }

  const std::vector<Entry>& params() const noexcept { return params_; }
  const std::vector<Entry>& buffers() const noexcept { return buffers_; }

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    throw ContractError("unknown parameter '" + name + "'");
  }

  /// Total scalar count of parameters whose name starts with `prefix`.
  std::size_t count_scalars(const std::string& prefix = "") const {
    std::size_t n = 0;
    for (const auto& e : params_)
      if (e.name.starts_with(prefix)) n += e.value.size();
    return n;
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : params_) out.add(e.name, e.value.template cast<U>());
    for (const auto& e : buffers_) out.add_buffer(e.name, e.value.template cast<U>());
    return out;
  }

  /// Copies values from a store with identical names and shapes.
  void assign(const ParamStore& other) {
    if (other.params_.size() != params_.size() || other.buffers_.size() != buffers_.size()) {
      throw ContractError("parameter store layout mismatch");
    }
    copy_entries(params_, other.params_);
    copy_entries(buffers_, other.buffers_);
  }

 private:
  static std::size_t insert(std::vector<Entry>& list, std::string name, Tensor<T> value) {
    for (const auto& e : list)
      if (e.name == name) throw ContractError("duplicate parameter name '" + name + "'");
    list.push_back(Entry{std::move(name), std::move(value)});
    return list.size() - 1;
  }

  static void copy_entries(std::vector<Entry>& dst, const std::vector<Entry>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (dst[i].name != src[i].name || dst[i].value.shape() != src[i].value.shape()) {
        throw ContractError("parameter '" + dst[i].name + "' does not match '" + src[i].name + "'");
      }
      dst[i].value = src[i].value;
    }
  }

  std::vector<Entry> params_;
  std::vector<Entry> buffers_;
};

/// Parameters of a store registered as leaves on one tape. Buffers stay in the store and are
/// updated in place by normalization layers running in training mode.
template <class T>
class Bound {
 public:
  Bound(Tape<T>& tape, ParamStore<T>& store, bool requires_grad = true) : tape_(&tape), store_(&store) {
    vars_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) vars_.push_back(tape.leaf(store.param(i).value, requires_grad));
  }

  const Var<T>& operator[](std::size_t i) const { return vars_.at(i); }
  Tape<T>& tape() const noexcept { return *tape_; }
  ParamStore<T>& store() const noexcept { return *store_; }
  Tensor<T>& buffer(std::size_t i) const { return store_->buffer(i).value; }

  /// Gradient pointers aligned with parameter indices, ready for an optimizer step.
  std::vector<const Tensor<T>*> gradients(const Gradients<T>& grads) const {
    std::vector<const Tensor<T>*> out;
    out.reserve(vars_.size());
    for (const auto& v : vars_) out.push_back(grads.contains(v.id()) ? &grads.at(v.id()) : nullptr);
    return out;
  }

 private:
  Tape<T>* tape_;
  ParamStore<T>* store_;
  std::vector<Var<T>> vars_;
};

}  // namespace mmmna::nn
