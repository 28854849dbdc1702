#pragma once

#include "tws/bench.hpp"
#include "tws/error.hpp"
#include "tws/factorization.hpp"
#include "tws/instance.hpp"
#include "tws/kernel.hpp"
#include "tws/matrix_market.hpp"
#include "tws/oracle.hpp"
#include "tws/random.hpp"
#include "tws/sinkhorn.hpp"
#include "tws/sparse.hpp"
#include "tws/transport.hpp"
#include "tws/verify.hpp"
