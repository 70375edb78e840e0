#include <stdio.h>
#include <string.h>

enum { SCAN_MAX = 64 };

static unsigned char text[SCAN_MAX];
static size_t text_len;

static int hex4(const unsigned char *p, unsigned *out) {
    unsigned v = 0;
    size_t k;
    for (k = 0; k < 4; k++) {
        unsigned c = p[k];
        if (c >= '0' && c <= '9') {
            v = (v << 4) | (c - '0');
        } else if (c >= 'A' && c <= 'F') {
            v = (v << 4) | (c - 'A' + 10);
        } else {
            return 0;
        }
    }
    *out = v;
    return 1;
}

int main(void) {
    size_t i = 0;
    unsigned first = 0;
    text_len = fread(text, 1, sizeof text, stdin);
    if (text_len < 1 || text[0] != '"') {
        return 1;
    }
    i = 1;
    while (i < text_len) {
        unsigned char c = text[i];
        if (c == '"') {
            puts("string ok");
            return 0;
        }
        if (c == '\\') {
            if (i + 5 < text_len && text[i + 1] == 'u') {
                if (!hex4(text + i + 2, &first)) {
                    goto fail;
                }
                if (first >= 0xD800 && first <= 0xDBFF) {
                    puts("high surrogate");
                }
                i += 6;
                continue;
            }
            goto fail;
        }
        i += 1;
    }
fail:
    return 2;
}
