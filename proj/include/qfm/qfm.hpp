#pragma once

#include "qfm/bootstrap.hpp"
#include "qfm/config.hpp"
#include "qfm/error.hpp"
#include "qfm/evaluate.hpp"
#include "qfm/mc.hpp"
#include "qfm/panel.hpp"
#include "qfm/parallel.hpp"
#include "qfm/qreg.hpp"
#include "qfm/qreg_oracle.hpp"
#include "qfm/qrpca.hpp"
#include "qfm/rng.hpp"
#include "qfm/selectk.hpp"
#include "qfm/sieve.hpp"
#include "qfm/spectral.hpp"
