#include <stdio.h>
#include <stdlib.h>

int main(void) {
    const char *v = getenv("PATH");
    printf("path=%s\n", v ? v : "(unset)");
    return 0;
}
