#pragma once

// Hand-written step recurrence of the shopping-session model, deliberately
// independent of the engine: no stocks, flows, links or clamping machinery,
// just the per-step transitions written out for one class.

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace oracle {

struct ClassParams {
  double arrivals_per_step;  // constant session initiations
  double add_to_cart_pct;
  double buy_pct;  // fixed buy rate (sigma 0)
  double browse_exit_pct;
  double abandon_split;
  double return_pct;
};

struct ClassTrace {
  std::vector<double> browsing, cart, payers, revenue;
};

// Element 0 is t = 0; payers[k] and revenue[k] for k >= 1 count step k - 1.
inline ClassTrace simulate(const ClassParams& p, double order_value, std::size_t steps) {
  ClassTrace out;
  double browsing = 0.0, cart = 0.0;
  out.browsing.push_back(browsing);
  out.cart.push_back(cart);
  out.payers.push_back(0.0);
  out.revenue.push_back(0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double add = browsing * p.add_to_cart_pct / 100.0;
    const double leave = browsing * p.browse_exit_pct / 100.0;
    const double buy = cart * p.buy_pct / 100.0;
    const double abandon = p.abandon_split * std::max(0.0, cart - buy);
    const double back = cart * p.return_pct / 100.0;
    // The oracle covers the regime where no stock is over-drawn.
    if (add + leave > browsing + p.arrivals_per_step + back || buy + abandon + back > cart + add) {
      throw std::logic_error("oracle parameters over-draw a stock");
    }
    browsing = browsing + p.arrivals_per_step + back - add - leave;
    cart = cart + add - buy - abandon - back;
    out.browsing.push_back(browsing);
    out.cart.push_back(cart);
    out.payers.push_back(buy);
    out.revenue.push_back(buy * order_value);
  }
  return out;
}

}  // namespace oracle
