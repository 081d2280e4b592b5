//
// Copyright 2026 The ConFiT Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef CONFIT_ERROR_H_
#define CONFIT_ERROR_H_

#include <stdexcept>
#include <string>

namespace confit {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

// Malformed input data: bad records, schema violations, out-of-range values.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class UnparseableDialogue : public Error {
 public:
  using Error::Error;
};

// Raised by a negative-sample strategy whose precondition does not hold for
// the given input. Callers skip the strategy.
class StrategyInapplicable : public Error {
 public:
  using Error::Error;
};

class NoSwapPossible : public StrategyInapplicable {
 public:
  using StrategyInapplicable::StrategyInapplicable;
};

class NoNumbersFound : public StrategyInapplicable {
 public:
  using StrategyInapplicable::StrategyInapplicable;
};

class NotEnoughEntities : public StrategyInapplicable {
 public:
  using StrategyInapplicable::StrategyInapplicable;
};

class TooFewTurns : public StrategyInapplicable {
 public:
  using StrategyInapplicable::StrategyInapplicable;
};

class SampleUnbuildable : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// A loss term evaluated to NaN or infinity. step is -1 outside training.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(const std::string& term, long step)
      : Error("non-finite " + term +
              (step >= 0 ? " at step " + std::to_string(step) : std::string())),
        term_(term),
        step_(step) {}
  const std::string& term() const { return term_; }
  long step() const { return step_; }

 private:
  std::string term_;
  long step_;
};

}  // namespace confit

#endif  // CONFIT_ERROR_H_
