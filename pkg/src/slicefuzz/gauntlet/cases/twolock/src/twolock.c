#include <stdio.h>
#include <string.h>

int main(void) {
    unsigned char buf[64];
    size_t n = fread(buf, 1, sizeof buf, stdin);
    if (n < 3) {
        return 0;
    }
    if (buf[0] == 'K') {
        if (memcmp(buf + 1, "EY", 2) == 0) {
            puts("opened");
        }
    }
    return 0;
}
