#pragma once

#include <mixsearch/bow.hpp>
#include <mixsearch/error.hpp>
#include <mixsearch/harness.hpp>
#include <mixsearch/io.hpp>
#include <mixsearch/models.hpp>
#include <mixsearch/moments.hpp>
#include <mixsearch/random.hpp>
#include <mixsearch/search.hpp>
#include <mixsearch/sideinfo.hpp>
#include <mixsearch/spectral.hpp>
#include <mixsearch/subspace.hpp>
